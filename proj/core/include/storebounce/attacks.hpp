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

#ifndef STOREBOUNCE_ATTACKS_HPP
#define STOREBOUNCE_ATTACKS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "storebounce/layout.hpp"
#include "storebounce/primitives.hpp"

namespace storebounce {

// Attack functions receive a core handle and public constants only; ground
// truth is read solely by the scorer that fills in f1 afterwards.

struct CandidateRecord {
  VirtualAddress addr;
  bool positive = false;
  std::uint32_t retries_used = 0;
  std::uint64_t cycles_after = 0;
};

struct SearchReport {
  std::vector<VirtualAddress> recovered;  // first element is the primary answer
  std::uint64_t candidates_tested = 0;
  std::uint32_t retries_per_candidate = 0;
  std::uint64_t simulated_cycles = 0;
  double f1 = -1.0;  // filled by the scorer, harmonic mean of precision/recall
  std::vector<CandidateRecord> records;

  VirtualAddress primary() const { return recovered.at(0); }
};

/// Majority vote of `retries` data_bounce tests on one address, with early
/// exit once the outcome is decided.
bool bounce_vote(Core& core, VirtualAddress p, std::uint8_t x, const ProbeArray& probe,
                 std::uint32_t retries);

/// Scans the 2 MiB-aligned kernel-base candidates of the OS from the low end
/// up. recovered[0] is the first bounced candidate; the scan then records
/// the run of immediately following candidates that also bounce (the kernel
/// image spans several of them). full_scan tests every candidate instead of
/// stopping, for F1 measurement. Throws NotFoundError when nothing bounces.
SearchReport break_kaslr(Core& core, OsProfile os, const ProbeArray& probe,
                         std::uint32_t retries = 1, bool full_scan = false,
                         std::uint8_t marker = kDefaultMarker);

/// Scans the 1 GiB-aligned direct-physical-map candidates with a
/// majority-of-retries vote per candidate. candidate_count trims the search
/// space for experiments; 0 means the full architectural range.
SearchReport find_direct_map(Core& core, const ProbeArray& probe, std::uint32_t retries = 3,
                             std::uint64_t candidate_count = 0, bool full_scan = false,
                             std::uint8_t marker = kDefaultMarker);

struct DetectedExtent {
  VirtualAddress start;
  std::uint64_t size_pages = 0;
};

/// Walks a page range and reports each maximal run of bounced pages as one
/// extent (modules are separated by unmapped pages). repeats > 1 takes a
/// majority vote per page for noisy profiles.
std::vector<DetectedExtent> enumerate_modules(Core& core, const ProbeArray& probe,
                                              VirtualAddress region_base,
                                              std::uint64_t region_pages,
                                              std::uint32_t repeats = 1,
                                              std::uint8_t marker = kDefaultMarker);

struct ClassifiedExtent {
  std::optional<std::string> name;  // assigned iff the size is unique in the table
  DetectedExtent extent;
};

/// Names extents whose page count is unique in the public module table.
std::vector<ClassifiedExtent> classify_modules(const std::vector<DetectedExtent>& extents,
                                               const std::vector<ModuleSpec>& public_table);

/// data_bounce over a page range; returns the vpns that bounced. Protected
/// (enclave-style) pages bounce although they are architecturally
/// inaccessible.
std::set<std::uint64_t> detect_protected_pages(Core& core, const ProbeArray& probe,
                                               VirtualAddress range_base,
                                               std::uint64_t range_pages,
                                               std::uint8_t marker = kDefaultMarker);

/// Runs the victim (a transaction script that aborts mid-way), then
/// fetch_bounce over the candidate vpns. Returns the candidates left in the
/// TLB, i.e. the pages the transaction touched before aborting. Candidates
/// are evicted up front.
std::set<std::uint64_t> tsx_atomicity_probe(Core& core, const std::function<void(Core&)>& victim,
                                            const std::vector<std::uint64_t>& candidate_vpns,
                                            const ProbeArray& probe,
                                            std::uint8_t marker = kDefaultMarker);

struct ActivityPeriod {
  std::uint64_t hits_target = 0;
  std::uint64_t hits_reference = 0;
  bool detected = false;  // hits_target > lower_bound and > hits_reference
  std::uint64_t cycles_after = 0;  // both hyperthreads' cycles at period end
};

struct ActivityTrace {
  std::vector<ActivityPeriod> periods;
};

/// Kernel touches driven per period: in period `period`, each sample touches
/// the listed pages (data and fetch-execute) on the sibling hyperthread.
struct ResolvedEvent {
  std::uint32_t period = 0;
  std::vector<VirtualAddress> pages;
};

struct MonitorParams {
  std::uint32_t periods = 100;
  std::uint32_t samples_per_period = 5000;
  std::uint64_t lower_bound = 5;
  std::uint8_t marker = kDefaultMarker;
};

/// Samples the target pages with fetch_bounce against both TLBs, evicting
/// between samples and alternating hyperthreads after each measurement,
/// while the event script drives kernel touches on the sibling. Per period,
/// sums the TLB hits on targets and the reference page and applies the
/// detection rule.
ActivityTrace monitor_activity(Core& ht0, Core& ht1, const std::vector<VirtualAddress>& targets,
                               VirtualAddress reference_page,
                               const std::vector<ResolvedEvent>& activity,
                               const ProbeArray& probe, const MonitorParams& params);

inline constexpr std::uint8_t kErasureByte = '?';

struct LeakReport {
  std::vector<std::uint8_t> bytes;  // kErasureByte marks positions that never hit
  std::uint64_t erasures = 0;
  std::uint64_t simulated_cycles = 0;
};

/// Leaks length bytes starting at gadget.data_base + start_index by repeated
/// speculative_fetch_bounce with majority voting across repeats. A byte with
/// no hit after all repeats is reported as an erasure.
LeakReport spectre_leak(Core& core, BranchPredictor& pred, const SpectreGadget& gadget,
                        std::uint64_t start_index, std::uint64_t length,
                        std::uint32_t repeats, const ProbeArray& probe,
                        std::uint8_t marker = kDefaultMarker);

}  // namespace storebounce

#endif
