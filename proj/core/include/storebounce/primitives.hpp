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

#ifndef STOREBOUNCE_PRIMITIVES_HPP
#define STOREBOUNCE_PRIMITIVES_HPP

#include <cstdint>
#include <optional>
#include <set>

#include "storebounce/core.hpp"
#include "storebounce/transient.hpp"

namespace storebounce {

inline constexpr std::uint8_t kDefaultMarker = 0x42;

/// 256 user-accessible pages at 4 KiB stride; the cache-encoding target.
struct ProbeArray {
  VirtualAddress base;
  static constexpr std::uint32_t n_pages = 256;
  static constexpr std::uint64_t stride = kPageSize;

  VirtualAddress page(std::uint8_t index) const { return base.offset_by(index * stride); }

  /// Checks all pages mapped, base aligned. Throws ConfigError otherwise.
  void validate(const AddressSpace& space) const;
};

enum class Decoder { FlushReload, EvictReload };

/// Eviction buffer for the EvictReload decoder; must cover at least twice
/// the cache capacity in distinct lines.
struct EvictBuffer {
  VirtualAddress base;
  std::uint64_t n_pages = 0;
};

struct BounceOutcome {
  bool bounced = false;
  std::optional<std::uint8_t> decoded_value;
};

enum class FetchClass { TlbHit, TlbMiss, Invalid };

/// retry 0 -> translation was in the TLB, 1 -> mapped but absent,
/// >= 2 -> invalid address.
struct FetchBounceClass {
  std::uint32_t retry = 0;
  FetchClass cls = FetchClass::Invalid;

  static FetchBounceClass from_retry(std::uint32_t retry) {
    FetchClass c = retry == 0   ? FetchClass::TlbHit
                   : retry == 1 ? FetchClass::TlbMiss
                                : FetchClass::Invalid;
    return {retry, c};
  }
};

const char* to_string(FetchClass cls);

/// Bounds-checked kernel array access whose taken path encodes
/// data[index] as a page access into oracle_base.
struct SpectreGadget {
  std::uint64_t site = 0;
  VirtualAddress data_base;   // kernel-resident byte array
  std::uint64_t bounds = 0;   // architectural length of the array
  VirtualAddress oracle_base;  // 256 contiguous kernel-mapped, user-inaccessible pages
};

/// One suppressed-fault round: store marker to p, load it back, encode the
/// loaded byte into the probe array, then test whether the marker page got
/// hot. True iff the store was forwarded (or the stale byte equals x).
/// kind selects which TLB the probed address exercises.
bool bounce_once(Core& core, VirtualAddress p, std::uint8_t x, const ProbeArray& probe,
                 AccessKind kind = AccessKind::Data, Decoder decoder = Decoder::FlushReload,
                 const EvictBuffer* evict = nullptr);

/// Tests whether p is backed by a physical page. Runs bounce_once and, when
/// the first round misses, once more so a translation filled by the page
/// walk gets a chance to forward: mapped addresses bounce regardless of
/// prior TLB state, canonical unmapped addresses never do, and non-canonical
/// addresses bounce through the synthetic-resolution quirk.
/// Requires x != 0 and the probe array disjoint from p's page.
BounceOutcome data_bounce(Core& core, VirtualAddress p, std::uint8_t x,
                          const ProbeArray& probe, Decoder decoder = Decoder::FlushReload,
                          const EvictBuffer* evict = nullptr);

/// data_bounce's decision without the 256-page decode: only the marker page
/// is tested. Identical verdicts at zero noise, and what the wide scans use.
bool bounce_test(Core& core, VirtualAddress p, std::uint8_t x, const ProbeArray& probe,
                 Decoder decoder = Decoder::FlushReload, const EvictBuffer* evict = nullptr);

/// Retry-counted bounce against the dTLB: up to `retries` rounds, breaking
/// on the first success; the break index classifies TlbHit / TlbMiss /
/// Invalid.
FetchBounceClass fetch_bounce(Core& core, VirtualAddress p, std::uint8_t x,
                              const ProbeArray& probe, std::uint32_t retries = 3);

/// Same contract against the iTLB, probing with fetch-execute accesses.
FetchBounceClass fetch_bounce_itlb(Core& core, VirtualAddress p, std::uint8_t x,
                                   const ProbeArray& probe, std::uint32_t retries = 3);

/// Leaks one byte through the gadget: per candidate page, evicts the
/// candidate's TLB set, mistrains the gadget's bounds check in-place,
/// triggers the transient out-of-bounds access (which fills the TLB entry of
/// oracle page data[index]), and classifies the candidate with fetch_bounce.
/// Returns the unique TlbHit index. Throws NoHitError when no page hit
/// (misspeculation failed) and AmbiguousHitError when several did.
std::uint8_t speculative_fetch_bounce(Core& core, BranchPredictor& pred,
                                      const SpectreGadget& gadget, std::uint64_t index,
                                      VirtualAddress tlb_probe_base, std::uint8_t x,
                                      const ProbeArray& probe);

/// Architectural runs of the gadget body with in-bounds indices; trains the
/// branch site toward taken.
void mistrain_gadget(Core& core, BranchPredictor& pred, const SpectreGadget& gadget,
                     std::uint32_t rounds = 4);

/// Invokes the gadget once with the given index, speculating on the bounds
/// check. Returns whether a transient run happened.
bool run_gadget(Core& core, BranchPredictor& pred, const SpectreGadget& gadget,
                std::uint64_t index);

/// Pages of the probe array whose timed reload classifies as cached.
/// FlushReload leaves pages cached; re-arm by flushing before encoding.
std::set<std::uint8_t> decode_flush_reload(Core& core, const ProbeArray& probe);

/// Same decode, then sweeps the eviction buffer so every probe line is
/// evicted again.
std::set<std::uint8_t> decode_evict_reload(Core& core, const ProbeArray& probe,
                                           const EvictBuffer& evict);

/// Flushes the first line of every probe page (FlushReload arming).
void arm_probe(Core& core, const ProbeArray& probe);

/// Accesses every line of the eviction buffer (EvictReload arming / re-arm).
void sweep_evict_buffer(Core& core, const EvictBuffer& evict);

}  // namespace storebounce

#endif
