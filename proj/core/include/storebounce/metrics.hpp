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

#ifndef STOREBOUNCE_METRICS_HPP
#define STOREBOUNCE_METRICS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace storebounce {

/// Precision/recall/F1 from classification counts. The all-zero case counts
/// as a perfect score (nothing to find, nothing found).
struct F1Score {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;

  static F1Score from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);
};

/// One trace row. The header contract is fixed:
///   scenario,seed,candidate,outcome,retry,cycles
struct TraceRow {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string candidate;
  std::string outcome;
  std::int64_t retry = 0;
  std::uint64_t cycles = 0;
};

extern const char kTraceHeader[];  // "scenario,seed,candidate,outcome,retry,cycles"

struct MetricsReport {
  std::string scenario;
  std::uint64_t seed = 0;
  double f1 = 1.0;
  double precision = 1.0;
  double recall = 1.0;
  std::uint64_t candidates_tested = 0;
  std::uint64_t simulated_cycles = 0;
  double wall_seconds = 0.0;  // never written to trace files
  std::vector<TraceRow> rows;

  void set_score(const F1Score& score);
};

enum class TraceFormat { Csv, Json };

TraceFormat trace_format_from_string(const std::string& name);

/// Seed-deterministic trace emission; wall-clock never appears.
void emit_trace(const MetricsReport& report, TraceFormat format, std::ostream& out);
void emit_trace_file(const MetricsReport& report, TraceFormat format, const std::string& path);
std::string trace_to_string(const MetricsReport& report, TraceFormat format);

/// Human-readable one-report summary for the CLI.
std::string summarize(const MetricsReport& report);

}  // namespace storebounce

#endif
