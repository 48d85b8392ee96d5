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

#include "storebounce/core.hpp"

#include <algorithm>
#include <cstring>

namespace storebounce {

// ---------------------------------------------------------------------------
// TlbState

TlbState::TlbState(TlbGeometry dtlb, TlbGeometry itlb) : dgeo_(dtlb), igeo_(itlb) {
  dtlb_.resize(static_cast<std::size_t>(dtlb.sets) * dtlb.ways);
  itlb_.resize(static_cast<std::size_t>(itlb.sets) * itlb.ways);
}

bool TlbState::lookup(TlbKind kind, std::uint64_t vpn) const {
  const TlbGeometry geo = geometry(kind);
  const auto& arr = array_of(kind);
  const std::uint64_t set = vpn % geo.sets;
  for (std::uint32_t w = 0; w < geo.ways; ++w) {
    const Entry& e = arr[set * geo.ways + w];
    if (e.valid && e.vpn == vpn) return true;
  }
  return false;
}

bool TlbState::touch(TlbKind kind, std::uint64_t vpn) {
  const TlbGeometry geo = geometry(kind);
  auto& arr = array_of(kind);
  const std::uint64_t set = vpn % geo.sets;
  for (std::uint32_t w = 0; w < geo.ways; ++w) {
    Entry& e = arr[set * geo.ways + w];
    if (e.valid && e.vpn == vpn) {
      e.lru = ++clock_;
      return true;
    }
  }
  return false;
}

void TlbState::insert(TlbKind kind, std::uint64_t vpn, std::uint64_t frame) {
  const TlbGeometry geo = geometry(kind);
  auto& arr = array_of(kind);
  const std::uint64_t set = vpn % geo.sets;
  Entry* victim = nullptr;
  for (std::uint32_t w = 0; w < geo.ways; ++w) {
    Entry& e = arr[set * geo.ways + w];
    if (e.valid && e.vpn == vpn) {  // refresh in place
      e.frame = frame;
      e.lru = ++clock_;
      return;
    }
    if (!e.valid) {
      if (!victim || victim->valid) victim = &e;
    } else if (!victim || (victim->valid && e.lru < victim->lru)) {
      victim = &e;
    }
  }
  *victim = Entry{true, vpn, frame, ++clock_};
}

void TlbState::flush_all(TlbKind kind) {
  for (Entry& e : array_of(kind)) e.valid = false;
}

std::optional<std::uint64_t> TlbState::frame_of(TlbKind kind, std::uint64_t vpn) const {
  const TlbGeometry geo = geometry(kind);
  const auto& arr = array_of(kind);
  const std::uint64_t set = vpn % geo.sets;
  for (std::uint32_t w = 0; w < geo.ways; ++w) {
    const Entry& e = arr[set * geo.ways + w];
    if (e.valid && e.vpn == vpn) return e.frame;
  }
  return std::nullopt;
}

std::vector<std::uint64_t> TlbState::resident_vpns(TlbKind kind) const {
  std::vector<std::uint64_t> out;
  for (const Entry& e : array_of(kind)) {
    if (e.valid) out.push_back(e.vpn);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// CacheState

void CacheState::insert(std::uint64_t line) {
  if (lines_.count(line)) return;  // FIFO: re-touching does not refresh
  const std::uint64_t gen = next_generation_++;
  lines_.emplace(line, gen);
  order_.push_back(QueueEntry{line, gen});
  while (lines_.size() > capacity_) {
    const QueueEntry oldest = order_.front();
    order_.pop_front();
    const auto it = lines_.find(oldest.line);
    if (it != lines_.end() && it->second == oldest.generation) {
      lines_.erase(it);
    }
  }
  if (order_.size() > 8 * capacity_ + 1024) compact();
}

void CacheState::flush(std::uint64_t line) { lines_.erase(line); }

void CacheState::compact() {
  std::deque<QueueEntry> live;
  for (const QueueEntry& e : order_) {
    const auto it = lines_.find(e.line);
    if (it != lines_.end() && it->second == e.generation) {
      live.push_back(e);
    }
  }
  order_ = std::move(live);
}

// ---------------------------------------------------------------------------
// Core

Core::Core(MicroarchProfile profile, std::shared_ptr<AddressSpace> space,
           std::shared_ptr<PhysicalMemory> memory, std::shared_ptr<TlbState> tlb,
           std::shared_ptr<CacheState> cache, std::uint64_t rng_seed)
    : profile_(std::move(profile)),
      space_(std::move(space)),
      memory_(std::move(memory)),
      tlb_(std::move(tlb)),
      cache_(std::move(cache)),
      rng_(rng_seed) {
  profile_.validate();
}

bool Core::access_faults(const TranslateResult& tr) const {
  switch (tr.kind) {
    case TranslateKind::NonCanonical:
    case TranslateKind::NotMapped:
      return true;
    case TranslateKind::Mapped:
      break;
  }
  if (tr.flags.protected_region) return true;  // enclave pages fault for everyone
  if (!supervisor_ && !tr.flags.user_accessible) return true;
  return false;
}

void Core::fill_on_access(const TranslateResult& tr, VirtualAddress vaddr, AccessKind kind) {
  if (!tr.mapped()) return;
  tlb_->insert(tlb_of(kind), vaddr.vpn(), tr.frame);
  cache_->insert(CacheState::line_id(tr.frame, vaddr.page_offset() / kLineSize));
}

namespace {

bool valid_access_size(std::size_t n) {
  return n == 1 || n == 2 || n == 4 || n == 8 || n == 16 || n == 32;
}

}  // namespace

void Core::store_issue(VirtualAddress vaddr, std::span<const std::uint8_t> data,
                       AccessKind kind) {
  if (!valid_access_size(data.size())) {
    throw ConfigError("store_issue: size must be one of 1,2,4,8,16,32");
  }
  if (vaddr.page_offset() + data.size() > kPageSize) {
    throw ConfigError("store_issue: access crosses a page boundary");
  }
  if (store_buffer_.size() >= profile_.store_buffer_capacity) {
    throw StallError();
  }

  StoreBufferEntry entry;
  entry.id = next_entry_id_++;
  entry.vaddr = vaddr;
  entry.size_bytes = static_cast<std::uint32_t>(data.size());
  std::memcpy(entry.data.data(), data.data(), data.size());
  entry.transient = in_window_;
  entry.tx_id = active_tx_;

  const TranslateResult tr = space_->translate(vaddr);
  const TlbKind tkind = tlb_of(kind);
  switch (tr.kind) {
    case TranslateKind::NonCanonical:
      // Missing canonicality check: the entry resolves against a synthetic
      // frame and forwards like any other.
      entry.resolved_frame = kSyntheticFrame;
      break;
    case TranslateKind::NotMapped:
      break;  // stays unresolved for good
    case TranslateKind::Mapped:
      if (tlb_->touch(tkind, vaddr.vpn())) {
        entry.resolved_frame = tr.frame;
      } else if (in_window_) {
        // The walk finishes only after the window closes, so a load in this
        // window sees the entry unresolved.
        pending_walks_.push_back(PendingWalk{tkind, vaddr.vpn(), tr.frame, entry.id});
      } else {
        tlb_->insert(tkind, vaddr.vpn(), tr.frame);
        entry.resolved_frame = tr.frame;
        cycles_ += profile_.lat_walk;
      }
      break;
  }

  if (!in_window_) {
    if (active_tx_ != 0) {
      if (tr.mapped()) {
        tx_touched_.insert(vaddr.vpn());
        TxWrite w;
        w.vaddr = vaddr;
        w.frame = tr.frame;
        w.size = entry.size_bytes;
        w.data = entry.data;
        tx_writes_.push_back(w);
        const std::uint64_t line = CacheState::line_id(tr.frame, vaddr.page_offset() / kLineSize);
        tx_written_lines_.push_back(line);
        cache_->insert(line);
      }
    } else if (tr.mapped() && !tr.flags.protected_region &&
               (supervisor_ || (tr.flags.user_accessible && tr.flags.writable))) {
      commit_write(vaddr, tr.frame, std::span<const std::uint8_t>(entry.data.data(), data.size()));
      cache_->insert(CacheState::line_id(tr.frame, vaddr.page_offset() / kLineSize));
    }
  }

  store_buffer_.push_back(entry);
  cycles_ += 1;
}

LoadResult Core::load_issue(VirtualAddress vaddr, std::uint32_t size, AccessKind kind) {
  if (!valid_access_size(size)) {
    throw ConfigError("load_issue: size must be one of 1,2,4,8,16,32");
  }
  if (vaddr.page_offset() + size > kPageSize) {
    throw ConfigError("load_issue: access crosses a page boundary");
  }

  const TranslateResult tr = space_->translate(vaddr);
  const std::uint64_t load_off = vaddr.page_offset();

  LoadResult result;
  result.size = size;
  result.faulted = access_faults(tr);

  bool forwarded = false;
  bool blocked = false;  // newest same-address store is unresolved or partial

  for (auto it = store_buffer_.rbegin(); it != store_buffer_.rend(); ++it) {
    const StoreBufferEntry& e = *it;
    if (e.vaddr.vpn() != vaddr.vpn()) continue;
    const std::uint64_t eo = e.vaddr.page_offset();
    if (load_off + size <= eo || eo + e.size_bytes <= load_off) continue;  // no overlap
    if (e.resolved() && load_off >= eo && load_off + size <= eo + e.size_bytes) {
      std::memcpy(result.bytes.data(), e.data.data() + (load_off - eo), size);
      result.source = LoadSource::StoreForward;
      forwarded = true;
    } else {
      blocked = true;  // no forwarding; the load continues with stale data
    }
    break;  // the newest overlapping same-address store decides
  }

  if (!forwarded && result.faulted && profile_.wtf_enabled) {
    // False-positive match path: a faulting load is forwarded data from the
    // newest store whose page-offset range covers the load offset, ignoring
    // the rest of the address. Exact-address matches were handled above.
    for (auto it = store_buffer_.rbegin(); it != store_buffer_.rend(); ++it) {
      const StoreBufferEntry& e = *it;
      if (e.vaddr.vpn() == vaddr.vpn()) continue;
      const std::uint64_t eo = e.vaddr.page_offset();
      if (load_off >= eo && load_off < eo + e.size_bytes) {
        const std::uint64_t delta = load_off - eo;
        const std::uint64_t avail = e.size_bytes - delta;
        std::memcpy(result.bytes.data(), e.data.data() + delta,
                    std::min<std::uint64_t>(avail, size));
        result.source = LoadSource::WtForward;
        forwarded = true;
        break;
      }
    }
  }

  if (!forwarded) {
    result.source = LoadSource::CacheOrMemory;
    if (!result.faulted) {
      memory_->read(tr.frame, load_off, std::span<std::uint8_t>(result.bytes.data(), size));
    }
    // faulted loads read as all-zero transiently
    (void)blocked;
  }

  // Every load, faulting or forwarded alike, fills the TLB and the cache
  // line it touches when the target has a translation.
  fill_on_access(tr, vaddr, kind);

  if (active_tx_ != 0 && tr.mapped()) {
    tx_touched_.insert(vaddr.vpn());
  }

  cycles_ += 1;

  if (result.faulted && !in_window_) {
    throw ArchitecturalFault("faulting access outside a transient window");
  }
  return result;
}

void Core::tlb_evict_vpn(TlbKind kind, std::uint64_t target_vpn) {
  if (!arena_base_) {
    throw ConfigError("tlb_evict_vpn: no eviction arena registered");
  }
  const TlbGeometry geo = tlb_->geometry(kind);
  const std::uint64_t base_vpn = arena_base_->vpn();
  const std::uint64_t first =
      base_vpn + (target_vpn % geo.sets + geo.sets - base_vpn % geo.sets) % geo.sets;
  const AccessKind akind = kind == TlbKind::Data ? AccessKind::Data : AccessKind::Fetch;
  for (std::uint32_t k = 0; k <= geo.ways; ++k) {
    const std::uint64_t vpn = first + static_cast<std::uint64_t>(k) * geo.sets;
    if (vpn >= base_vpn + arena_pages_) {
      throw ConfigError("tlb_evict_vpn: eviction arena too small");
    }
    load_issue(va_of_vpn(vpn), 1, akind);
  }
}

void Core::set_eviction_arena(VirtualAddress base, std::uint64_t n_pages) {
  arena_base_ = base.page_base();
  arena_pages_ = n_pages;
}

void Core::flush_line(VirtualAddress vaddr) {
  const TranslateResult tr = space_->translate(vaddr);
  if (!tr.mapped()) throw ConfigError("flush_line: address not mapped");
  cache_->flush(CacheState::line_id(tr.frame, vaddr.page_offset() / kLineSize));
  cycles_ += 1;
}

bool Core::line_cached(VirtualAddress vaddr) const {
  const TranslateResult tr = space_->translate(vaddr);
  if (!tr.mapped()) return false;
  return cache_->contains(CacheState::line_id(tr.frame, vaddr.page_offset() / kLineSize));
}

std::uint64_t Core::timed_access(VirtualAddress vaddr, AccessKind kind) {
  const TranslateResult tr = space_->translate(vaddr);
  if (access_faults(tr)) {
    if (!in_window_) throw ArchitecturalFault("timed_access: faulting access");
    cycles_ += profile_.lat_cache_miss;
    return profile_.lat_cache_miss;
  }
  const TlbKind tkind = tlb_of(kind);
  const bool walked = !tlb_->touch(tkind, vaddr.vpn());
  if (walked) tlb_->insert(tkind, vaddr.vpn(), tr.frame);

  const std::uint64_t line = CacheState::line_id(tr.frame, vaddr.page_offset() / kLineSize);
  bool classified_hit = cache_->contains(line);
  if (rng_.chance(profile_.noise_p)) classified_hit = !classified_hit;
  cache_->insert(line);

  const std::uint64_t latency = (classified_hit ? profile_.lat_cache_hit : profile_.lat_cache_miss) +
                                (walked ? profile_.lat_walk : 0);
  cycles_ += latency;
  return latency;
}

void Core::begin_window(Suppression suppression) {
  if (in_window_) throw std::logic_error("transient windows do not nest");
  in_window_ = true;
  window_suppression_ = suppression;
}

void Core::end_window() {
  // Page walks scheduled by in-window stores complete now: the TLB keeps the
  // translation even though the store itself is squashed.
  for (const PendingWalk& walk : pending_walks_) {
    tlb_->insert(walk.kind, walk.vpn, walk.frame);
    for (StoreBufferEntry& e : store_buffer_) {
      if (e.id == walk.entry_id) {
        e.resolved_frame = walk.frame;
        break;
      }
    }
    cycles_ += profile_.lat_walk;
  }
  pending_walks_.clear();

  // Squash: transient stores never reach memory.
  std::erase_if(store_buffer_, [](const StoreBufferEntry& e) { return e.transient; });

  cycles_ += suppression_overhead(window_suppression_);
  in_window_ = false;
}

Transaction Core::tx_begin() {
  if (active_tx_ != 0) throw TxStateError("tx_begin: a transaction is already active");
  if (in_window_) throw TxStateError("tx_begin: inside a transient window");
  Transaction tx;
  tx.id = next_tx_id_++;
  tx.status = TxStatus::Active;
  active_tx_ = tx.id;
  tx_touched_.clear();
  tx_writes_.clear();
  tx_written_lines_.clear();
  return tx;
}

void Core::tx_commit(Transaction& tx) {
  if (tx.id != active_tx_ || tx.status != TxStatus::Active) {
    throw TxStateError("tx_commit: transaction is not the active one");
  }
  for (const TxWrite& w : tx_writes_) {
    commit_write(w.vaddr, w.frame, std::span<const std::uint8_t>(w.data.data(), w.size));
  }
  std::erase_if(store_buffer_, [&](const StoreBufferEntry& e) { return e.tx_id == tx.id; });
  tx.touched_vpns = tx_touched_;
  tx.status = TxStatus::Committed;
  active_tx_ = 0;
  tx_touched_.clear();
  tx_writes_.clear();
  tx_written_lines_.clear();
}

void Core::tx_abort(Transaction& tx) {
  if (tx.id != active_tx_ || tx.status != TxStatus::Active) {
    throw TxStateError("tx_abort: transaction is not the active one");
  }
  // Buffered writes vanish and the lines they modified are invalidated; the
  // TLB entries filled by the transaction stay resident.
  std::erase_if(store_buffer_, [&](const StoreBufferEntry& e) { return e.tx_id == tx.id; });
  for (std::uint64_t line : tx_written_lines_) {
    cache_->flush(line);
  }
  tx.touched_vpns = tx_touched_;
  tx.status = TxStatus::Aborted;
  active_tx_ = 0;
  tx_touched_.clear();
  tx_writes_.clear();
  tx_written_lines_.clear();
}

void Core::resolve_entry(StoreBufferEntry& entry, std::uint64_t frame) {
  entry.resolved_frame = frame;
}

void Core::commit_write(VirtualAddress vaddr, std::uint64_t frame,
                        std::span<const std::uint8_t> bytes) {
  memory_->write(frame, vaddr.page_offset(), bytes);
}

Machine make_machine(const MicroarchProfile& profile, std::uint64_t rng_seed,
                     std::size_t n_cores) {
  Machine m;
  m.space = std::make_shared<AddressSpace>();
  m.memory = std::make_shared<PhysicalMemory>();
  m.tlb = std::make_shared<TlbState>(profile.dtlb, profile.itlb);
  m.cache = std::make_shared<CacheState>(profile.cache_capacity_lines);
  for (std::size_t i = 0; i < n_cores; ++i) {
    m.cores.push_back(std::make_unique<Core>(profile, m.space, m.memory, m.tlb, m.cache,
                                             rng_seed + i * 0x9E3779B97F4A7C15ull));
  }
  return m;
}

}  // namespace storebounce
