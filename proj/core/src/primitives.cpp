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

#include "storebounce/primitives.hpp"

#include "storebounce/errors.hpp"

namespace storebounce {

void ProbeArray::validate(const AddressSpace& space) const {
  if (base.page_offset() != 0) throw ConfigError("probe array base not page-aligned");
  for (std::uint32_t i = 0; i < n_pages; ++i) {
    const TranslateResult tr = space.translate(base.offset_by(i * stride));
    if (!tr.mapped() || !tr.flags.user_accessible) {
      throw ConfigError("probe array page not user-mapped");
    }
  }
}

const char* to_string(FetchClass cls) {
  switch (cls) {
    case FetchClass::TlbHit: return "tlb-hit";
    case FetchClass::TlbMiss: return "tlb-miss";
    case FetchClass::Invalid: return "invalid";
  }
  return "?";
}

namespace {

void check_bounce_preconditions(VirtualAddress p, std::uint8_t x, const ProbeArray& probe) {
  if (x == 0) throw ConfigError("bounce marker must be nonzero");
  const std::uint64_t pv = p.vpn();
  if (pv >= probe.base.vpn() && pv < probe.base.vpn() + ProbeArray::n_pages) {
    throw ConfigError("probe array overlaps the probed page");
  }
}

// The suppressed-fault body shared by every bounce variant: store the marker
// to p, load it back, encode the loaded byte as a probe-page access.
void bounce_body(Core& core, VirtualAddress p, std::uint8_t x, const ProbeArray& probe,
                 AccessKind kind) {
  with_window(core, Suppression::TsxLike, [&] {
    const std::uint8_t data[1] = {x};
    core.store_issue(p, data, kind);
    const LoadResult r = core.load_issue(p, 1, kind);
    core.load_issue(probe.page(r.byte()), 1, AccessKind::Data);
  });
}

}  // namespace

bool bounce_once(Core& core, VirtualAddress p, std::uint8_t x, const ProbeArray& probe,
                 AccessKind kind, Decoder decoder, const EvictBuffer* evict) {
  check_bounce_preconditions(p, x, probe);
  if (decoder == Decoder::FlushReload) {
    core.flush_line(probe.page(x));
  }
  bounce_body(core, p, x, probe, kind);
  const std::uint64_t t = core.timed_access(probe.page(x));
  const bool hot = t < core.profile().hit_threshold;
  if (decoder == Decoder::EvictReload) {
    if (!evict) throw ConfigError("EvictReload decoder needs an eviction buffer");
    sweep_evict_buffer(core, *evict);
  }
  return hot;
}

BounceOutcome data_bounce(Core& core, VirtualAddress p, std::uint8_t x,
                          const ProbeArray& probe, Decoder decoder,
                          const EvictBuffer* evict) {
  check_bounce_preconditions(p, x, probe);
  if (decoder == Decoder::EvictReload && !evict) {
    throw ConfigError("EvictReload decoder needs an eviction buffer");
  }

  // Two suppressed-fault rounds, then one probe-array decode. The first
  // store's page walk only finishes when its window closes, so a cold
  // translation forwards in the second round; an address that is not backed
  // forwards in neither. The decode runs after both rounds because reloading
  // all 256 probe pages floods the dTLB sets and would evict the freshly
  // walked translation between per-round decodes.
  if (decoder == Decoder::FlushReload) arm_probe(core, probe);
  bounce_body(core, p, x, probe, AccessKind::Data);
  bounce_body(core, p, x, probe, AccessKind::Data);
  const std::set<std::uint8_t> hot = decoder == Decoder::FlushReload
                                         ? decode_flush_reload(core, probe)
                                         : decode_evict_reload(core, probe, *evict);

  BounceOutcome outcome;
  outcome.bounced = hot.count(x) != 0;
  if (outcome.bounced) {
    outcome.decoded_value = x;
  } else if (hot.size() == 1) {
    outcome.decoded_value = *hot.begin();
  }
  return outcome;
}

bool bounce_test(Core& core, VirtualAddress p, std::uint8_t x, const ProbeArray& probe,
                 Decoder decoder, const EvictBuffer* evict) {
  for (int round = 0; round < 2; ++round) {
    if (bounce_once(core, p, x, probe, AccessKind::Data, decoder, evict)) return true;
  }
  return false;
}

FetchBounceClass fetch_bounce(Core& core, VirtualAddress p, std::uint8_t x,
                              const ProbeArray& probe, std::uint32_t retries) {
  if (retries == 0) throw ConfigError("fetch_bounce: retries must be >= 1");
  for (std::uint32_t retry = 0; retry < retries; ++retry) {
    if (bounce_once(core, p, x, probe, AccessKind::Data)) {
      return FetchBounceClass::from_retry(retry);
    }
  }
  return FetchBounceClass::from_retry(retries - 1);
}

FetchBounceClass fetch_bounce_itlb(Core& core, VirtualAddress p, std::uint8_t x,
                                   const ProbeArray& probe, std::uint32_t retries) {
  if (retries == 0) throw ConfigError("fetch_bounce_itlb: retries must be >= 1");
  for (std::uint32_t retry = 0; retry < retries; ++retry) {
    if (bounce_once(core, p, x, probe, AccessKind::Fetch)) {
      return FetchBounceClass::from_retry(retry);
    }
  }
  return FetchBounceClass::from_retry(retries - 1);
}

namespace {

void gadget_body(Core& core, const SpectreGadget& gadget, std::uint64_t index) {
  // The gadget runs in the kernel: its accesses are privileged.
  const bool was = core.supervisor();
  core.set_supervisor(true);
  const LoadResult secret = core.load_issue(gadget.data_base.offset_by(index), 1);
  core.load_issue(gadget.oracle_base.offset_by(std::uint64_t{secret.byte()} * kPageSize), 1);
  core.set_supervisor(was);
}

}  // namespace

void mistrain_gadget(Core& core, BranchPredictor& pred, const SpectreGadget& gadget,
                     std::uint32_t rounds) {
  for (std::uint32_t i = 0; i < rounds; ++i) {
    run_gadget(core, pred, gadget, 0);  // in bounds: the branch is taken
  }
}

bool run_gadget(Core& core, BranchPredictor& pred, const SpectreGadget& gadget,
                std::uint64_t index) {
  const bool in_bounds = index < gadget.bounds;
  return speculate(core, pred, gadget.site, in_bounds,
                   [&] { gadget_body(core, gadget, index); });
}

std::uint8_t speculative_fetch_bounce(Core& core, BranchPredictor& pred,
                                      const SpectreGadget& gadget, std::uint64_t index,
                                      VirtualAddress tlb_probe_base, std::uint8_t x,
                                      const ProbeArray& probe) {
  std::vector<std::uint8_t> hits;
  for (std::uint32_t c = 0; c < 256; ++c) {
    // Training runs touch oracle pages architecturally, so the candidate's
    // TLB set is cleaned after training and before the transient trigger.
    mistrain_gadget(core, pred, gadget);
    core.tlb_evict_vpn(TlbKind::Data, tlb_probe_base.vpn() + c);
    run_gadget(core, pred, gadget, index);
    const FetchBounceClass fb =
        fetch_bounce(core, tlb_probe_base.offset_by(std::uint64_t{c} * kPageSize), x, probe);
    if (fb.cls == FetchClass::TlbHit) {
      hits.push_back(static_cast<std::uint8_t>(c));
    }
  }
  if (hits.empty()) throw NoHitError();
  if (hits.size() > 1) throw AmbiguousHitError();
  return hits.front();
}

std::set<std::uint8_t> decode_flush_reload(Core& core, const ProbeArray& probe) {
  std::set<std::uint8_t> hot;
  for (std::uint32_t i = 0; i < ProbeArray::n_pages; ++i) {
    if (core.timed_access(probe.page(static_cast<std::uint8_t>(i))) <
        core.profile().hit_threshold) {
      hot.insert(static_cast<std::uint8_t>(i));
    }
  }
  return hot;
}

std::set<std::uint8_t> decode_evict_reload(Core& core, const ProbeArray& probe,
                                           const EvictBuffer& evict) {
  std::set<std::uint8_t> hot;
  for (std::uint32_t i = 0; i < ProbeArray::n_pages; ++i) {
    if (core.timed_access(probe.page(static_cast<std::uint8_t>(i))) <
        core.profile().hit_threshold) {
      hot.insert(static_cast<std::uint8_t>(i));
    }
  }
  sweep_evict_buffer(core, evict);
  return hot;
}

void arm_probe(Core& core, const ProbeArray& probe) {
  for (std::uint32_t i = 0; i < ProbeArray::n_pages; ++i) {
    core.flush_line(probe.page(static_cast<std::uint8_t>(i)));
  }
}

void sweep_evict_buffer(Core& core, const EvictBuffer& evict) {
  for (std::uint64_t page = 0; page < evict.n_pages; ++page) {
    for (std::uint64_t line = 0; line < kPageSize / kLineSize; ++line) {
      core.load_issue(evict.base.offset_by(page * kPageSize + line * kLineSize), 1);
    }
  }
}

}  // namespace storebounce
