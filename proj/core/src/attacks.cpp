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

#include "storebounce/attacks.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace storebounce {

bool bounce_vote(Core& core, VirtualAddress p, std::uint8_t x, const ProbeArray& probe,
                 std::uint32_t retries) {
  if (retries == 0) throw ConfigError("bounce_vote: retries must be >= 1");
  const std::uint32_t majority = retries / 2 + 1;
  std::uint32_t pos = 0, neg = 0;
  for (std::uint32_t i = 0; i < retries && pos < majority && neg < majority; ++i) {
    if (bounce_test(core, p, x, probe)) {
      ++pos;
    } else {
      ++neg;
    }
  }
  return pos >= majority;
}

namespace {

struct ScanState {
  SearchReport report;
  std::uint64_t cycles_start = 0;
};

bool test_candidate(Core& core, VirtualAddress addr, std::uint8_t marker,
                    const ProbeArray& probe, std::uint32_t retries, SearchReport& report) {
  const bool positive = bounce_vote(core, addr, marker, probe, retries);
  report.records.push_back(CandidateRecord{addr, positive, retries, core.cycles()});
  ++report.candidates_tested;
  return positive;
}

}  // namespace

SearchReport break_kaslr(Core& core, OsProfile os, const ProbeArray& probe,
                         std::uint32_t retries, bool full_scan, std::uint8_t marker) {
  const LayoutConstants consts = layout_constants(os);
  SearchReport report;
  report.retries_per_candidate = retries;
  const std::uint64_t cycles_start = core.cycles();

  std::optional<std::uint64_t> first_hit;
  bool in_run = false;
  for (std::uint64_t k = 0; k < consts.kernel_base_slots; ++k) {
    const VirtualAddress addr = va(consts.kernel_base_start + k * consts.kernel_base_align);
    const bool positive = test_candidate(core, addr, marker, probe, retries, report);
    if (positive) {
      if (!first_hit) {
        first_hit = k;
        in_run = true;
        report.recovered.push_back(addr);
      } else if (in_run) {
        report.recovered.push_back(addr);  // the image spans consecutive slots
      }
    } else if (first_hit) {
      in_run = false;
      if (!full_scan) break;  // run of hits after the base has ended
    }
  }

  report.simulated_cycles = core.cycles() - cycles_start;
  if (!first_hit) throw NotFoundError("kernel base: no candidate bounced");
  return report;
}

SearchReport find_direct_map(Core& core, const ProbeArray& probe, std::uint32_t retries,
                             std::uint64_t candidate_count, bool full_scan,
                             std::uint8_t marker) {
  const LayoutConstants consts = layout_constants(OsProfile::Linux);
  const std::uint64_t slots = candidate_count == 0 ? consts.direct_map_slots : candidate_count;
  SearchReport report;
  report.retries_per_candidate = retries;
  const std::uint64_t cycles_start = core.cycles();

  for (std::uint64_t k = 0; k < slots; ++k) {
    const VirtualAddress addr = va(consts.direct_map_start + k * consts.direct_map_align);
    const bool positive = test_candidate(core, addr, marker, probe, retries, report);
    if (positive) {
      if (report.recovered.empty()) report.recovered.push_back(addr);
      if (!full_scan) break;
    }
  }

  report.simulated_cycles = core.cycles() - cycles_start;
  if (report.recovered.empty()) throw NotFoundError("direct-physical map: no candidate bounced");
  return report;
}

std::vector<DetectedExtent> enumerate_modules(Core& core, const ProbeArray& probe,
                                              VirtualAddress region_base,
                                              std::uint64_t region_pages,
                                              std::uint32_t repeats, std::uint8_t marker) {
  std::vector<DetectedExtent> extents;
  std::optional<std::uint64_t> run_start;
  for (std::uint64_t i = 0; i < region_pages; ++i) {
    const VirtualAddress page = region_base.offset_by(i * kPageSize);
    const bool mapped = bounce_vote(core, page, marker, probe, repeats);
    if (mapped && !run_start) {
      run_start = i;
    } else if (!mapped && run_start) {
      extents.push_back(
          DetectedExtent{region_base.offset_by(*run_start * kPageSize), i - *run_start});
      run_start.reset();
    }
  }
  if (run_start) {
    extents.push_back(DetectedExtent{region_base.offset_by(*run_start * kPageSize),
                                     region_pages - *run_start});
  }
  return extents;
}

std::vector<ClassifiedExtent> classify_modules(const std::vector<DetectedExtent>& extents,
                                               const std::vector<ModuleSpec>& public_table) {
  std::unordered_map<std::uint64_t, std::uint32_t> size_count;
  std::unordered_map<std::uint64_t, std::string> size_name;
  for (const ModuleSpec& spec : public_table) {
    ++size_count[spec.size_pages];
    size_name[spec.size_pages] = spec.name;
  }
  std::vector<ClassifiedExtent> out;
  out.reserve(extents.size());
  for (const DetectedExtent& e : extents) {
    ClassifiedExtent c{std::nullopt, e};
    auto it = size_count.find(e.size_pages);
    if (it != size_count.end() && it->second == 1) {
      c.name = size_name.at(e.size_pages);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::set<std::uint64_t> detect_protected_pages(Core& core, const ProbeArray& probe,
                                               VirtualAddress range_base,
                                               std::uint64_t range_pages, std::uint8_t marker) {
  std::set<std::uint64_t> detected;
  for (std::uint64_t i = 0; i < range_pages; ++i) {
    const VirtualAddress page = range_base.offset_by(i * kPageSize);
    if (bounce_test(core, page, marker, probe)) {
      detected.insert(page.vpn());
    }
  }
  return detected;
}

std::set<std::uint64_t> tsx_atomicity_probe(Core& core, const std::function<void(Core&)>& victim,
                                            const std::vector<std::uint64_t>& candidate_vpns,
                                            const ProbeArray& probe, std::uint8_t marker) {
  for (std::uint64_t vpn : candidate_vpns) {
    core.tlb_evict_vpn(TlbKind::Data, vpn);
  }
  victim(core);
  std::set<std::uint64_t> touched;
  for (std::uint64_t vpn : candidate_vpns) {
    const FetchBounceClass fb = fetch_bounce(core, va_of_vpn(vpn), marker, probe);
    if (fb.cls == FetchClass::TlbHit) touched.insert(vpn);
  }
  return touched;
}

namespace {

std::uint64_t measure_page(Core& att, VirtualAddress page, std::uint8_t marker,
                           const ProbeArray& probe) {
  std::uint64_t hits = 0;
  if (fetch_bounce(att, page, marker, probe).cls == FetchClass::TlbHit) ++hits;
  if (fetch_bounce_itlb(att, page, marker, probe).cls == FetchClass::TlbHit) ++hits;
  att.tlb_evict_vpn(TlbKind::Data, page.vpn());
  att.tlb_evict_vpn(TlbKind::Instr, page.vpn());
  return hits;
}

void kernel_touch(Core& kernel, const std::vector<VirtualAddress>& pages) {
  const bool was = kernel.supervisor();
  kernel.set_supervisor(true);
  for (VirtualAddress page : pages) {
    kernel.load_issue(page, 1, AccessKind::Data);
    kernel.load_issue(page, 1, AccessKind::Fetch);
  }
  kernel.set_supervisor(was);
}

}  // namespace

ActivityTrace monitor_activity(Core& ht0, Core& ht1, const std::vector<VirtualAddress>& targets,
                               VirtualAddress reference_page,
                               const std::vector<ResolvedEvent>& activity,
                               const ProbeArray& probe, const MonitorParams& params) {
  std::unordered_map<std::uint32_t, std::vector<const ResolvedEvent*>> by_period;
  for (const ResolvedEvent& e : activity) by_period[e.period].push_back(&e);

  ActivityTrace trace;
  trace.periods.reserve(params.periods);
  std::uint64_t measurement = 0;  // hyperthread flips after every measurement

  for (std::uint32_t p = 0; p < params.periods; ++p) {
    ActivityPeriod period;
    const auto events = by_period.find(p);
    for (std::uint32_t s = 0; s < params.samples_per_period; ++s) {
      Core& att = (measurement++ % 2 == 0) ? ht0 : ht1;
      Core& sibling = (&att == &ht0) ? ht1 : ht0;
      if (events != by_period.end()) {
        for (const ResolvedEvent* e : events->second) {
          kernel_touch(sibling, e->pages);
        }
      }
      for (VirtualAddress page : targets) {
        period.hits_target += measure_page(att, page, params.marker, probe);
      }
      period.hits_reference += measure_page(att, reference_page, params.marker, probe);
    }
    period.detected =
        period.hits_target > params.lower_bound && period.hits_target > period.hits_reference;
    period.cycles_after = ht0.cycles() + ht1.cycles();
    trace.periods.push_back(period);
  }
  return trace;
}

LeakReport spectre_leak(Core& core, BranchPredictor& pred, const SpectreGadget& gadget,
                        std::uint64_t start_index, std::uint64_t length,
                        std::uint32_t repeats, const ProbeArray& probe, std::uint8_t marker) {
  if (repeats == 0) throw ConfigError("spectre_leak: repeats must be >= 1");
  LeakReport report;
  report.bytes.reserve(length);
  const std::uint64_t cycles_start = core.cycles();
  const std::uint32_t dtlb_sets = core.profile().dtlb.sets;

  for (std::uint64_t i = 0; i < length; ++i) {
    // One eviction per dTLB set clears every oracle-page translation.
    for (std::uint32_t s = 0; s < dtlb_sets; ++s) {
      core.tlb_evict_vpn(TlbKind::Data, gadget.oracle_base.vpn() + s);
    }
    std::map<std::uint8_t, std::uint32_t> votes;
    for (std::uint32_t r = 0; r < repeats; ++r) {
      try {
        ++votes[speculative_fetch_bounce(core, pred, gadget, start_index + i,
                                         gadget.oracle_base, marker, probe)];
      } catch (const NoHitError&) {
      } catch (const AmbiguousHitError&) {
      }
    }
    if (votes.empty()) {
      report.bytes.push_back(kErasureByte);
      ++report.erasures;
    } else {
      auto best = votes.begin();
      for (auto it = votes.begin(); it != votes.end(); ++it) {
        if (it->second > best->second) best = it;
      }
      report.bytes.push_back(best->first);
    }
  }
  report.simulated_cycles = core.cycles() - cycles_start;
  return report;
}

}  // namespace storebounce
