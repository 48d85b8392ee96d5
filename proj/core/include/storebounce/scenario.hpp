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

#ifndef STOREBOUNCE_SCENARIO_HPP
#define STOREBOUNCE_SCENARIO_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "storebounce/attacks.hpp"
#include "storebounce/core.hpp"
#include "storebounce/layout.hpp"
#include "storebounce/metrics.hpp"

namespace storebounce {

/// Everything a run needs. The seed fully determines the run at fixed
/// config.
struct ScenarioConfig {
  std::string profile = "skylake";
  std::string scenario;  // kaslr, directmap, modules, enclave, tsx, monitor, spectre-leak, sweep
  std::uint64_t seed = 1;
  OsProfile os = OsProfile::Linux;
  std::optional<double> noise_p;
  std::optional<std::uint32_t> repeats;
  std::string out_path;
  std::string format = "csv";

  // monitor
  std::optional<std::string> event_script_path;
  std::uint32_t periods = 30;
  std::uint32_t samples_per_period = 5000;

  // modules
  std::optional<std::uint64_t> scan_pages;

  // spectre-leak
  std::string secret = "SECRET";

  // sweep
  std::string sweep_target = "kaslr";
  std::uint32_t sweep_seeds = 10;
};

/// Runs one scenario and scores it against the ground truth it generated.
/// Throws ConfigError for invalid configuration and scenario errors
/// (NotFoundError, ...) when the attack itself fails.
MetricsReport run_scenario(const ScenarioConfig& config);

/// Brute-force ground-truth enumerator: every mapped vpn of the space.
std::set<std::uint64_t> oracle_mapped_set(const AddressSpace& space);

/// Raw JSON event script: list of {period, module, pages} entries.
struct EventScriptEntry {
  std::uint32_t period = 0;
  std::string module;
  std::uint32_t pages_touched = 0;
};

std::vector<EventScriptEntry> parse_event_script(const std::string& json_text);
std::vector<ResolvedEvent> resolve_event_script(const std::vector<EventScriptEntry>& entries,
                                                const KernelLayout& layout);

/// The synthetic 26-entry module table used by the module and monitor
/// scenarios (all sizes unique).
std::vector<ModuleSpec> default_module_table();

/// A ready-to-attack environment: realized layout, user probe array,
/// TLB-eviction arena and cache-eviction buffer, wired into a machine.
struct ScenarioWorld {
  Machine machine;
  KernelLayout layout;
  ProbeArray probe;
  EvictBuffer evict_buffer;
};

ScenarioWorld make_world(const MicroarchProfile& profile, std::uint64_t seed, OsProfile os,
                         const std::vector<ModuleSpec>& module_table, std::size_t n_cores = 1);

}  // namespace storebounce

#endif
