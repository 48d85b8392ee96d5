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

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "storebounce/storebounce.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitScenario = 3;

storebounce::OsProfile parse_os(const std::string& name) {
  if (name == "linux") return storebounce::OsProfile::Linux;
  if (name == "windows") return storebounce::OsProfile::Windows;
  throw storebounce::ConfigError("unknown os '" + name + "' (expected linux or windows)");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace storebounce;

  CLI::App app{"storebounce: a deterministic store-buffer/TLB side-channel simulator"};
  app.require_subcommand(1);

  ScenarioConfig config;
  std::string os_name = "linux";
  double noise = -1.0;
  std::uint32_t repeats = 0;
  std::uint64_t scan_pages = 0;
  bool dump_layout = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--profile", config.profile,
                    "Built-in profile name (skylake, pentium4), a JSON file path, or a name "
                    "under $STOREBOUNCE_PROFILE_DIR");
    sub->add_option("--seed", config.seed, "Layout and noise seed");
    sub->add_option("--noise", noise, "Override the profile's timing-noise probability");
    sub->add_option("--repeats", repeats, "Tests per candidate (majority vote)");
    sub->add_option("--out", config.out_path, "Write the per-candidate trace to this file");
    sub->add_option("--format", config.format, "Trace format: csv or json");
  };

  CLI::App* kaslr = app.add_subcommand("kaslr", "Recover the randomized kernel base");
  add_common(kaslr);
  kaslr->add_option("--os", os_name, "Kernel layout flavor: linux or windows");
  kaslr->add_flag("--dump-layout", dump_layout, "Print the generated layout as JSON");

  CLI::App* directmap =
      app.add_subcommand("directmap", "Recover the direct-physical-map base");
  add_common(directmap);

  CLI::App* modules = app.add_subcommand("modules", "Enumerate and classify kernel modules");
  add_common(modules);
  modules->add_option("--scan-pages", scan_pages, "Pages of the module region to walk");
  modules->add_flag("--dump-layout", dump_layout, "Print the generated layout as JSON");

  CLI::App* enclave =
      app.add_subcommand("enclave", "Detect protected pages inside an enclave range");
  add_common(enclave);

  CLI::App* tsx = app.add_subcommand("tsx", "Recover the pages an aborted transaction touched");
  add_common(tsx);

  CLI::App* monitor = app.add_subcommand("monitor", "Sample kernel-module activity per period");
  add_common(monitor);
  std::string script_path;
  monitor->add_option("--script", script_path,
                      "Event script: JSON list of {period, module, pages}");
  monitor->add_option("--periods", config.periods, "Sampling periods");
  monitor->add_option("--samples", config.samples_per_period, "Measurements per period");
  monitor->add_option("--scan-pages", scan_pages, "Pages walked to locate the target module");

  CLI::App* spectre =
      app.add_subcommand("spectre-leak", "Leak kernel bytes through the bounds-check gadget");
  add_common(spectre);
  spectre->add_option("--secret", config.secret, "Bytes planted in simulated kernel memory");

  CLI::App* sweep = app.add_subcommand("sweep", "Run a scenario across consecutive seeds");
  add_common(sweep);
  sweep->add_option("--target", config.sweep_target, "Scenario to sweep");
  sweep->add_option("--seeds", config.sweep_seeds, "Number of seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    config.scenario = app.get_subcommands().front()->get_name();
    config.os = parse_os(os_name);
    if (noise >= 0.0) config.noise_p = noise;
    if (repeats > 0) config.repeats = repeats;
    if (scan_pages > 0) config.scan_pages = scan_pages;
    if (!script_path.empty()) config.event_script_path = script_path;

    if (dump_layout) {
      const KernelLayout layout =
          generate_layout(config.seed, config.os,
                          config.scenario == "modules" ? default_module_table()
                                                       : std::vector<ModuleSpec>{});
      std::cout << layout_to_json(layout) << "\n";
    }

    const MetricsReport report = run_scenario(config);
    std::cout << summarize(report) << "\n";
    if (!config.out_path.empty()) {
      std::cout << "trace written to " << config.out_path << "\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SimError& e) {
    std::cerr << "scenario failed: " << e.what() << "\n";
    return kExitScenario;
  }
}
