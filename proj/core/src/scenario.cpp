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

#include "storebounce/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "storebounce/transient.hpp"

namespace storebounce {

namespace {

// Fixed user-space islands; all scenarios share this floor plan.
constexpr std::uint64_t kProbeBase = 0x00007f0000000000ull;
constexpr std::uint64_t kArenaBase = 0x00007f0000200000ull;
constexpr std::uint64_t kArenaPages = 256;
constexpr std::uint64_t kEvictBase = 0x00007f0000400000ull;
constexpr std::uint64_t kVictimBase = 0x00007f0003000000ull;
constexpr std::uint64_t kEnclaveBase = 0x00007f0002000000ull;
constexpr std::uint64_t kEnclavePages = 64;

constexpr PageFlags kUserFlags{.present = true,
                               .user_accessible = true,
                               .writable = true,
                               .protected_region = false};

std::string hex_string(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016" PRIx64, v);
  return buf;
}

struct Counts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  // Classifies one decision against truth and returns the row label.
  const char* record(bool positive, bool truth) {
    if (positive && truth) return ++tp, "tp";
    if (positive && !truth) return ++fp, "fp";
    if (!positive && truth) return ++fn, "fn";
    return ++tn, "tn";
  }

  F1Score score() const { return F1Score::from_counts(tp, fp, fn); }
};

class WallClock {
public:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

std::vector<ModuleSpec> default_module_table() {
  return {
      {"usbhid", 12},     {"bluetooth", 134}, {"i2c_i801", 5},   {"snd_hda", 87},
      {"e1000e", 61},     {"nvme", 23},       {"xfs", 180},      {"btrfs", 160},
      {"ext4", 120},      {"kvm", 150},       {"iwlwifi", 95},   {"ath9k", 42},
      {"cfg80211", 76},   {"mac80211", 110},  {"videobuf2", 18}, {"uvcvideo", 33},
      {"snd_usb", 29},    {"raid1", 21},      {"dm_crypt", 15},  {"xhci_pci", 9},
      {"thunderbolt", 55},{"wacom", 11},      {"joydev", 7},     {"hid_generic", 3},
      {"nf_tables", 68},  {"bridge", 48},
  };
}

ScenarioWorld make_world(const MicroarchProfile& profile, std::uint64_t seed, OsProfile os,
                         const std::vector<ModuleSpec>& module_table, std::size_t n_cores) {
  ScenarioWorld world{make_machine(profile, seed, n_cores),
                      generate_layout(seed, os, module_table),
                      ProbeArray{va(kProbeBase)},
                      EvictBuffer{va(kEvictBase), 0}};
  realize_layout(world.layout, *world.machine.space);

  world.machine.space->map_region(va(kProbeBase), ProbeArray::n_pages, kUserFlags);
  world.machine.space->map_region(va(kArenaBase), kArenaPages, kUserFlags);

  const std::uint64_t evict_lines = 2 * profile.cache_capacity_lines;
  world.evict_buffer.n_pages = (evict_lines * kLineSize + kPageSize - 1) / kPageSize;
  world.machine.space->map_region(va(kEvictBase), world.evict_buffer.n_pages, kUserFlags);

  world.probe.validate(*world.machine.space);
  for (auto& core : world.machine.cores) {
    core->set_eviction_arena(va(kArenaBase), kArenaPages);
  }
  return world;
}

std::set<std::uint64_t> oracle_mapped_set(const AddressSpace& space) {
  std::set<std::uint64_t> vpns;
  for (const auto& [vpn, entry] : space.pages()) {
    vpns.insert(vpn);
  }
  return vpns;
}

std::vector<EventScriptEntry> parse_event_script(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("event script: invalid JSON: ") + e.what());
  }
  if (!j.is_array()) throw ConfigError("event script: expected a JSON array");
  std::vector<EventScriptEntry> out;
  for (const auto& item : j) {
    try {
      out.push_back(EventScriptEntry{item.at("period").get<std::uint32_t>(),
                                     item.at("module").get<std::string>(),
                                     item.at("pages").get<std::uint32_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("event script: bad entry: ") + e.what());
    }
  }
  return out;
}

std::vector<ResolvedEvent> resolve_event_script(const std::vector<EventScriptEntry>& entries,
                                                const KernelLayout& layout) {
  std::vector<ResolvedEvent> out;
  for (const EventScriptEntry& entry : entries) {
    const auto it = std::find_if(layout.modules.begin(), layout.modules.end(),
                                 [&](const ModuleExtent& m) { return m.name == entry.module; });
    if (it == layout.modules.end()) {
      throw ConfigError("event script: unknown module '" + entry.module + "'");
    }
    ResolvedEvent ev;
    ev.period = entry.period;
    const std::uint32_t pages = std::min<std::uint64_t>(entry.pages_touched, it->size_pages);
    for (std::uint32_t i = 0; i < pages; ++i) {
      ev.pages.push_back(it->start.offset_by(i * kPageSize));
    }
    out.push_back(std::move(ev));
  }
  return out;
}

namespace {

MicroarchProfile profile_for(const ScenarioConfig& config) {
  MicroarchProfile profile = resolve_profile(config.profile);
  if (config.noise_p) {
    profile.noise_p = *config.noise_p;
    if (profile.noise_p < 0.0 || profile.noise_p >= 1.0) {
      throw ConfigError("noise_p must be in [0,1)");
    }
  }
  return profile;
}

MetricsReport base_report(const ScenarioConfig& config) {
  MetricsReport report;
  report.scenario = config.scenario;
  report.seed = config.seed;
  return report;
}

TraceRow make_row(const MetricsReport& report, std::string candidate, std::string outcome,
                  std::int64_t retry, std::uint64_t cycles) {
  return TraceRow{report.scenario, report.seed, std::move(candidate), std::move(outcome), retry,
                  cycles};
}

MetricsReport run_scan_scenario(const ScenarioConfig& config, bool directmap) {
  const MicroarchProfile profile = profile_for(config);
  ScenarioWorld world = make_world(profile, config.seed, config.os, {});
  Core& core = world.machine.core();

  const std::uint32_t retries = config.repeats.value_or(directmap ? 3u : 1u);
  SearchReport search = directmap
                            ? find_direct_map(core, world.probe, retries)
                            : break_kaslr(core, config.os, world.probe, retries);

  MetricsReport report = base_report(config);
  report.candidates_tested = search.candidates_tested;
  report.simulated_cycles = search.simulated_cycles;
  report.rows.push_back(make_row(report, hex_string(search.primary().value), "recovered",
                                 static_cast<std::int64_t>(retries), search.simulated_cycles));

  Counts counts;
  for (const CandidateRecord& rec : search.records) {
    const bool truth = world.machine.space->is_mapped(rec.addr.vpn());
    const char* outcome = counts.record(rec.positive, truth);
    report.rows.push_back(make_row(report, hex_string(rec.addr.value), outcome,
                                   rec.retries_used, rec.cycles_after));
  }
  report.set_score(counts.score());

  const VirtualAddress truth_base =
      directmap ? world.layout.direct_map_base : world.layout.kernel_base;
  if (!(search.primary() == truth_base)) {
    // A wrong recovery with clean per-candidate classification cannot happen
    // at zero noise; surface it through the score regardless.
    report.f1 = 0.0;
  }
  return report;
}

// A high kernel base reaches into the module region as a mapped run starting
// at the region's first page. Modules always sit behind at least one
// unmapped page, so a region-base extent is the image tail, not a module.
std::vector<DetectedExtent> drop_kernel_tail(std::vector<DetectedExtent> extents,
                                             VirtualAddress region_base) {
  if (!extents.empty() && extents.front().start == region_base) {
    extents.erase(extents.begin());
  }
  return extents;
}

MetricsReport run_modules_scenario(const ScenarioConfig& config) {
  const MicroarchProfile profile = profile_for(config);
  const std::vector<ModuleSpec> table = default_module_table();
  ScenarioWorld world = make_world(profile, config.seed, config.os, table);
  Core& core = world.machine.core();

  const LayoutConstants consts = layout_constants(config.os);
  const std::uint64_t scan_pages = config.scan_pages.value_or(consts.module_region_pages);
  const std::uint32_t repeats = config.repeats.value_or(profile.noise_p > 0.0 ? 32u : 1u);

  const std::uint64_t cycles_start = core.cycles();
  const std::vector<DetectedExtent> extents = drop_kernel_tail(
      enumerate_modules(core, world.probe, va(consts.module_region_base), scan_pages, repeats),
      va(consts.module_region_base));
  const std::vector<ClassifiedExtent> classified = classify_modules(extents, table);

  MetricsReport report = base_report(config);
  report.candidates_tested = scan_pages;
  report.simulated_cycles = core.cycles() - cycles_start;

  // Naming score: a uniquely-sized module counts as recovered when an extent
  // with its exact start and size carries its name.
  std::unordered_map<std::string, const ModuleExtent*> truth_by_name;
  std::unordered_map<std::uint64_t, std::uint32_t> size_count;
  for (const ModuleSpec& spec : table) ++size_count[spec.size_pages];
  for (const ModuleExtent& m : world.layout.modules) truth_by_name[m.name] = &m;

  Counts counts;
  std::set<std::string> named_correctly;
  for (const ClassifiedExtent& c : classified) {
    std::string outcome = "tn";  // extent with a non-unique size, left unnamed
    if (c.name) {
      const ModuleExtent* truth = truth_by_name.count(*c.name) ? truth_by_name.at(*c.name) : nullptr;
      const bool exact = truth && truth->start == c.extent.start &&
                         truth->size_pages == c.extent.size_pages;
      outcome = counts.record(true, exact);
      if (exact) named_correctly.insert(*c.name);
    }
    report.rows.push_back(make_row(report, hex_string(c.extent.start.value), outcome,
                                   static_cast<std::int64_t>(c.extent.size_pages),
                                   report.simulated_cycles));
  }
  for (const ModuleExtent& m : world.layout.modules) {
    if (size_count.at(m.size_pages) == 1 && !named_correctly.count(m.name)) {
      counts.fn++;
      report.rows.push_back(make_row(report, hex_string(m.start.value), "fn",
                                     static_cast<std::int64_t>(m.size_pages),
                                     report.simulated_cycles));
    }
  }
  report.set_score(counts.score());
  return report;
}

MetricsReport run_enclave_scenario(const ScenarioConfig& config) {
  const MicroarchProfile profile = profile_for(config);
  ScenarioWorld world = make_world(profile, config.seed, config.os, {});
  Core& core = world.machine.core();

  // The enclave virtual range: every page is either backed by a protected
  // frame or not mapped at all.
  Rng pattern(config.seed ^ 0xE9C1A0Eull);
  std::set<std::uint64_t> truth;
  const PageFlags protected_flags{.present = true,
                                  .user_accessible = false,
                                  .writable = false,
                                  .protected_region = true};
  for (std::uint64_t i = 0; i < kEnclavePages; ++i) {
    if (pattern.chance(0.5)) {
      const VirtualAddress page = va(kEnclaveBase).offset_by(i * kPageSize);
      world.machine.space->map_region(page, 1, protected_flags);
      truth.insert(page.vpn());
    }
  }

  const std::uint64_t cycles_start = core.cycles();
  const std::set<std::uint64_t> detected =
      detect_protected_pages(core, world.probe, va(kEnclaveBase), kEnclavePages);

  MetricsReport report = base_report(config);
  report.candidates_tested = kEnclavePages;
  report.simulated_cycles = core.cycles() - cycles_start;

  Counts counts;
  for (std::uint64_t i = 0; i < kEnclavePages; ++i) {
    const std::uint64_t vpn = va(kEnclaveBase).vpn() + i;
    const char* outcome = counts.record(detected.count(vpn) != 0, truth.count(vpn) != 0);
    report.rows.push_back(
        make_row(report, hex_string(va_of_vpn(vpn).value), outcome, 1, report.simulated_cycles));
  }
  report.set_score(counts.score());
  return report;
}

MetricsReport run_tsx_scenario(const ScenarioConfig& config) {
  const MicroarchProfile profile = profile_for(config);
  ScenarioWorld world = make_world(profile, config.seed, config.os, {});
  Core& core = world.machine.core();

  // 16 consecutive pages: one per dTLB set at the default geometry, so the
  // probe cannot cross-evict candidates.
  const std::uint64_t n_candidates = 16;
  world.machine.space->map_region(va(kVictimBase), n_candidates, kUserFlags);
  std::vector<std::uint64_t> candidates;
  for (std::uint64_t i = 0; i < n_candidates; ++i) {
    candidates.push_back(va(kVictimBase).vpn() + i);
  }

  Rng script(config.seed ^ 0x7357);
  std::vector<std::uint64_t> order = candidates;
  script.shuffle(order);
  const std::uint64_t k = script.below(11);  // pages touched before the abort
  const std::set<std::uint64_t> truth(order.begin(), order.begin() + k);

  const auto victim = [&](Core& c) {
    Transaction tx = c.tx_begin();
    for (std::uint64_t i = 0; i < k; ++i) {
      c.load_issue(va_of_vpn(order[i]), 1);
    }
    c.tx_abort(tx);
  };

  const std::uint64_t cycles_start = core.cycles();
  const std::set<std::uint64_t> observed =
      tsx_atomicity_probe(core, victim, candidates, world.probe);

  MetricsReport report = base_report(config);
  report.candidates_tested = n_candidates;
  report.simulated_cycles = core.cycles() - cycles_start;

  Counts counts;
  for (std::uint64_t vpn : candidates) {
    const char* outcome = counts.record(observed.count(vpn) != 0, truth.count(vpn) != 0);
    report.rows.push_back(
        make_row(report, hex_string(va_of_vpn(vpn).value), outcome, 1, report.simulated_cycles));
  }
  report.set_score(counts.score());
  return report;
}

std::vector<EventScriptEntry> default_mouse_script() {
  std::vector<EventScriptEntry> entries;
  for (std::uint32_t p = 10; p <= 20; ++p) {
    entries.push_back(EventScriptEntry{p, "usbhid", 8});
  }
  return entries;
}

MetricsReport run_monitor_scenario(const ScenarioConfig& config) {
  const MicroarchProfile profile = profile_for(config);
  const std::vector<ModuleSpec> table = default_module_table();
  ScenarioWorld world = make_world(profile, config.seed, config.os, table, 2);
  Core& ht0 = world.machine.core(0);
  Core& ht1 = world.machine.core(1);

  // Locate the target and reference modules the same way an attacker would:
  // enumerate the module region, then classify by unique size.
  const LayoutConstants consts = layout_constants(config.os);
  const std::uint64_t scan_pages = config.scan_pages.value_or(8192);
  const std::vector<ClassifiedExtent> classified = classify_modules(
      drop_kernel_tail(
          enumerate_modules(ht0, world.probe, va(consts.module_region_base), scan_pages, 1),
          va(consts.module_region_base)),
      table);

  const auto find_named = [&](const std::string& name) -> const ClassifiedExtent* {
    for (const ClassifiedExtent& c : classified) {
      if (c.name == name) return &c;
    }
    return nullptr;
  };
  const ClassifiedExtent* target = find_named("usbhid");
  const ClassifiedExtent* reference = find_named("i2c_i801");
  if (!target || !reference) {
    throw NotFoundError("monitor: could not locate the target or reference module");
  }

  std::vector<VirtualAddress> target_pages;
  for (std::uint64_t i = 0; i < std::min<std::uint64_t>(8, target->extent.size_pages); ++i) {
    target_pages.push_back(target->extent.start.offset_by(i * kPageSize));
  }

  std::vector<EventScriptEntry> entries;
  if (config.event_script_path) {
    std::ifstream in(*config.event_script_path);
    if (!in) throw ConfigError("cannot open event script " + *config.event_script_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    entries = parse_event_script(buf.str());
  } else {
    entries = default_mouse_script();
  }
  const std::vector<ResolvedEvent> activity = resolve_event_script(entries, world.layout);

  MonitorParams params;
  params.periods = config.periods;
  params.samples_per_period = config.samples_per_period;

  const ActivityTrace trace = monitor_activity(ht0, ht1, target_pages, reference->extent.start,
                                               activity, world.probe, params);

  std::set<std::uint32_t> scripted;
  for (const EventScriptEntry& e : entries) scripted.insert(e.period);

  MetricsReport report = base_report(config);
  report.candidates_tested = params.periods;
  report.simulated_cycles = ht0.cycles() + ht1.cycles();

  Counts counts;
  for (std::uint32_t p = 0; p < trace.periods.size(); ++p) {
    const ActivityPeriod& period = trace.periods[p];
    const char* outcome = counts.record(period.detected, scripted.count(p) != 0);
    report.rows.push_back(make_row(report, "period-" + std::to_string(p), outcome,
                                   static_cast<std::int64_t>(period.hits_target),
                                   period.cycles_after));
  }
  report.set_score(counts.score());
  return report;
}

MetricsReport run_spectre_scenario(const ScenarioConfig& config) {
  const MicroarchProfile profile = profile_for(config);
  if (config.os != OsProfile::Linux) {
    throw ConfigError("spectre-leak requires the linux layout");
  }
  ScenarioWorld world = make_world(profile, config.seed, config.os, {});
  Core& core = world.machine.core();
  AddressSpace& space = *world.machine.space;

  if (config.secret.empty()) throw ConfigError("spectre-leak: empty secret");

  const PageFlags kernel_flags{.present = true,
                               .user_accessible = false,
                               .writable = true,
                               .protected_region = false};
  const std::uint64_t bounds = 16;
  const VirtualAddress data_base = world.layout.direct_map_base.offset_by(64 * kPageSize);
  const std::uint64_t data_pages = (bounds + config.secret.size() + kPageSize - 1) / kPageSize;
  space.map_region(data_base, data_pages, kernel_flags);
  const VirtualAddress oracle_base = world.layout.direct_map_base.offset_by(128 * kPageSize);
  space.map_region(oracle_base, 256, kernel_flags);

  for (std::size_t i = 0; i < config.secret.size(); ++i) {
    const VirtualAddress addr = data_base.offset_by(bounds + i);
    const TranslateResult tr = space.translate(addr);
    world.machine.memory->write_byte(tr.frame, addr.page_offset(),
                                     static_cast<std::uint8_t>(config.secret[i]));
  }

  const SpectreGadget gadget{1, data_base, bounds, oracle_base};
  BranchPredictor pred;
  const std::uint32_t repeats =
      config.repeats.value_or(profile.mispredict_success_p < 1.0 ? 8u : 1u);

  const LeakReport leak = spectre_leak(core, pred, gadget, bounds, config.secret.size(), repeats,
                                       world.probe);

  MetricsReport report = base_report(config);
  report.candidates_tested = config.secret.size();
  report.simulated_cycles = leak.simulated_cycles;

  Counts counts;
  for (std::size_t i = 0; i < config.secret.size(); ++i) {
    const std::uint8_t want = static_cast<std::uint8_t>(config.secret[i]);
    const std::uint8_t got = leak.bytes[i];
    const char* outcome;
    if (got == want) {
      outcome = counts.record(true, true);  // tp
    } else if (got == kErasureByte) {
      outcome = counts.record(false, true);  // fn: erased
    } else {
      outcome = counts.record(true, false);  // fp: wrong byte
    }
    char candidate[16];
    std::snprintf(candidate, sizeof(candidate), "byte-%zu", i);
    report.rows.push_back(make_row(report, candidate, outcome,
                                   static_cast<std::int64_t>(repeats), report.simulated_cycles));
  }
  report.set_score(counts.score());
  return report;
}

MetricsReport run_sweep(const ScenarioConfig& config) {
  if (config.sweep_target == "sweep") throw ConfigError("sweep cannot target itself");
  MetricsReport report = base_report(config);
  double f1_sum = 0.0;
  for (std::uint32_t s = 0; s < config.sweep_seeds; ++s) {
    ScenarioConfig sub = config;
    sub.scenario = config.sweep_target;
    sub.seed = config.seed + s;
    sub.out_path.clear();
    const MetricsReport seed_report = run_scenario(sub);
    f1_sum += seed_report.f1;
    report.candidates_tested += seed_report.candidates_tested;
    report.simulated_cycles += seed_report.simulated_cycles;
    char f1_text[32];
    std::snprintf(f1_text, sizeof(f1_text), "f1=%.6f", seed_report.f1);
    report.rows.push_back(make_row(report, "seed-" + std::to_string(sub.seed), f1_text, 0,
                                   seed_report.simulated_cycles));
  }
  report.f1 = config.sweep_seeds ? f1_sum / config.sweep_seeds : 1.0;
  report.precision = report.f1;
  report.recall = report.f1;
  return report;
}

}  // namespace

MetricsReport run_scenario(const ScenarioConfig& config) {
  const TraceFormat format = trace_format_from_string(config.format);
  WallClock clock;
  MetricsReport report;
  if (config.scenario == "kaslr") {
    report = run_scan_scenario(config, false);
  } else if (config.scenario == "directmap") {
    report = run_scan_scenario(config, true);
  } else if (config.scenario == "modules") {
    report = run_modules_scenario(config);
  } else if (config.scenario == "enclave") {
    report = run_enclave_scenario(config);
  } else if (config.scenario == "tsx") {
    report = run_tsx_scenario(config);
  } else if (config.scenario == "monitor") {
    report = run_monitor_scenario(config);
  } else if (config.scenario == "spectre-leak") {
    report = run_spectre_scenario(config);
  } else if (config.scenario == "sweep") {
    report = run_sweep(config);
  } else {
    throw ConfigError("unknown scenario '" + config.scenario + "'");
  }
  report.wall_seconds = clock.elapsed();

  if (!config.out_path.empty()) {
    emit_trace_file(report, format, config.out_path);
  }
  return report;
}

}  // namespace storebounce
