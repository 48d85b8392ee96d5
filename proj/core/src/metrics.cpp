/*
 *    Copyright 2026 The storebounce Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "storebounce/metrics.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "storebounce/errors.hpp"

namespace storebounce {

const char kTraceHeader[] = "scenario,seed,candidate,outcome,retry,cycles";

F1Score F1Score::from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  F1Score s;
  if (tp + fp + fn == 0) {
    return s;  // nothing to find and nothing found
  }
  s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                              : (fn == 0 ? 1.0 : 0.0);
  s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
  s.f1 = (s.precision + s.recall) > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

void MetricsReport::set_score(const F1Score& score) {
  precision = score.precision;
  recall = score.recall;
  f1 = score.f1;
}

TraceFormat trace_format_from_string(const std::string& name) {
  if (name == "csv") return TraceFormat::Csv;
  if (name == "json") return TraceFormat::Json;
  throw ConfigError("unknown trace format '" + name + "' (expected csv or json)");
}

namespace {

void emit_csv(const MetricsReport& report, std::ostream& out) {
  out << kTraceHeader << "\n";
  for (const TraceRow& row : report.rows) {
    out << row.scenario << ',' << row.seed << ',' << row.candidate << ',' << row.outcome << ','
        << row.retry << ',' << row.cycles << "\n";
  }
}

void emit_json(const MetricsReport& report, std::ostream& out) {
  nlohmann::json rows = nlohmann::json::array();
  for (const TraceRow& row : report.rows) {
    rows.push_back({{"scenario", row.scenario},
                    {"seed", row.seed},
                    {"candidate", row.candidate},
                    {"outcome", row.outcome},
                    {"retry", row.retry},
                    {"cycles", row.cycles}});
  }
  out << rows.dump(2) << "\n";
}

}  // namespace

void emit_trace(const MetricsReport& report, TraceFormat format, std::ostream& out) {
  if (format == TraceFormat::Csv) {
    emit_csv(report, out);
  } else {
    emit_json(report, out);
  }
}

void emit_trace_file(const MetricsReport& report, TraceFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open trace output file " + path);
  emit_trace(report, format, out);
}

std::string trace_to_string(const MetricsReport& report, TraceFormat format) {
  std::ostringstream out;
  emit_trace(report, format, out);
  return out.str();
}

std::string summarize(const MetricsReport& report) {
  std::ostringstream out;
  out << "scenario=" << report.scenario << " seed=" << report.seed;
  out.setf(std::ios::fixed);
  out.precision(6);
  out << " f1=" << report.f1 << " precision=" << report.precision << " recall=" << report.recall
      << " candidates=" << report.candidates_tested << " cycles=" << report.simulated_cycles;
  out.precision(3);
  out << " wall_s=" << report.wall_seconds;
  return out.str();
}

}  // namespace storebounce
