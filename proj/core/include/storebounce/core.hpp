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

#ifndef STOREBOUNCE_CORE_HPP
#define STOREBOUNCE_CORE_HPP

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "storebounce/address.hpp"
#include "storebounce/errors.hpp"
#include "storebounce/profile.hpp"
#include "storebounce/rng.hpp"

namespace storebounce {

enum class TlbKind { Data, Instr };

// Fetch models the instruction path: it consults and fills the iTLB.
enum class AccessKind { Data, Fetch };

constexpr TlbKind tlb_of(AccessKind kind) {
  return kind == AccessKind::Data ? TlbKind::Data : TlbKind::Instr;
}

/// Set-associative dTLB + iTLB with LRU replacement. Set index is
/// vpn mod sets. Only canonical, mapped vpns are ever inserted.
class TlbState {
public:
  TlbState(TlbGeometry dtlb, TlbGeometry itlb);

  bool lookup(TlbKind kind, std::uint64_t vpn) const;

  /// Lookup that refreshes the entry's LRU rank on hit.
  bool touch(TlbKind kind, std::uint64_t vpn);

  void insert(TlbKind kind, std::uint64_t vpn, std::uint64_t frame);
  void flush_all(TlbKind kind);

  std::optional<std::uint64_t> frame_of(TlbKind kind, std::uint64_t vpn) const;
  TlbGeometry geometry(TlbKind kind) const { return kind == TlbKind::Data ? dgeo_ : igeo_; }

  std::vector<std::uint64_t> resident_vpns(TlbKind kind) const;

private:
  struct Entry {
    bool valid = false;
    std::uint64_t vpn = 0;
    std::uint64_t frame = 0;
    std::uint64_t lru = 0;
  };

  std::vector<Entry>& array_of(TlbKind kind) { return kind == TlbKind::Data ? dtlb_ : itlb_; }
  const std::vector<Entry>& array_of(TlbKind kind) const {
    return kind == TlbKind::Data ? dtlb_ : itlb_;
  }

  TlbGeometry dgeo_, igeo_;
  std::vector<Entry> dtlb_, itlb_;
  std::uint64_t clock_ = 0;
};

/// Cache as a capacity-bounded set of line identifiers (frame, line index)
/// with FIFO replacement. flush removes exactly the named line; access
/// inserts it. FIFO makes a sweep of 2x capacity distinct lines evict
/// everything that was resident before.
///
/// Flushed lines leave stale queue entries behind; generation tags keep an
/// eviction from hitting a line that was flushed and inserted again since.
class CacheState {
public:
  explicit CacheState(std::size_t capacity_lines) : capacity_(capacity_lines) {}

  static std::uint64_t line_id(std::uint64_t frame, std::uint64_t line_in_page) {
    return frame * (kPageSize / kLineSize) + line_in_page;
  }

  bool contains(std::uint64_t line) const { return lines_.count(line) != 0; }
  void insert(std::uint64_t line);
  void flush(std::uint64_t line);
  std::size_t size() const { return lines_.size(); }

private:
  struct QueueEntry {
    std::uint64_t line;
    std::uint64_t generation;
  };

  void compact();

  std::size_t capacity_;
  std::uint64_t next_generation_ = 1;
  std::unordered_map<std::uint64_t, std::uint64_t> lines_;  // line -> live generation
  std::deque<QueueEntry> order_;
};

inline constexpr std::uint32_t kMaxAccessBytes = 32;

/// One pending store. resolved_frame is absent until the translation is
/// known; non-canonical targets resolve to a synthetic frame so forwarding
/// still succeeds (the quirk this simulator reproduces).
struct StoreBufferEntry {
  std::uint64_t id = 0;
  VirtualAddress vaddr;
  std::uint32_t size_bytes = 0;  // one of 1,2,4,8,16,32
  std::array<std::uint8_t, kMaxAccessBytes> data{};
  std::optional<std::uint64_t> resolved_frame;
  bool transient = false;
  std::uint64_t tx_id = 0;  // 0 = not part of a transaction

  bool resolved() const { return resolved_frame.has_value(); }
};

inline constexpr std::uint64_t kSyntheticFrame = kFrameMask;  // non-canonical resolution

enum class LoadSource { StoreForward, WtForward, CacheOrMemory, Squashed };

struct LoadResult {
  std::array<std::uint8_t, kMaxAccessBytes> bytes{};
  std::uint32_t size = 0;
  LoadSource source = LoadSource::CacheOrMemory;
  bool faulted = false;

  std::uint8_t byte() const { return bytes[0]; }
};

enum class Suppression { TsxLike, SignalLike };

// Simulated-cycle cost of one suppressed-fault round trip.
constexpr std::uint64_t suppression_overhead(Suppression s) {
  return s == Suppression::TsxLike ? 560 : 2300;
}

enum class TxStatus { Active, Committed, Aborted };

/// Hardware-transaction handle. On abort, buffered writes vanish and written
/// cache lines are invalidated, but TLB entries for touched_vpns stay.
struct Transaction {
  std::uint64_t id = 0;
  TxStatus status = TxStatus::Active;
  std::set<std::uint64_t> touched_vpns;
};

/// One logical core: store buffer, TLBs, cache, cycle counter, privilege
/// mode, and the transient-window / transaction machinery. Hyperthread pairs
/// are two Cores sharing TlbState and CacheState, used strictly by turns.
class Core {
public:
  Core(MicroarchProfile profile, std::shared_ptr<AddressSpace> space,
       std::shared_ptr<PhysicalMemory> memory, std::shared_ptr<TlbState> tlb,
       std::shared_ptr<CacheState> cache, std::uint64_t rng_seed);

  // -- stores and loads ----------------------------------------------------

  /// Appends a store-buffer entry and applies the resolution rule:
  /// TLB hit -> resolved now; mapped but TLB miss -> a page walk fills the
  /// TLB and resolves the entry, deferred to window close while transient;
  /// not mapped -> never resolves; non-canonical -> synthetic resolution.
  /// Throws StallError when the buffer is full.
  void store_issue(VirtualAddress vaddr, std::span<const std::uint8_t> data,
                   AccessKind kind = AccessKind::Data);

  /// Searches the store buffer newest-to-oldest. Exact-address resolved
  /// match forwards the stored bytes; an unresolved exact-address match
  /// blocks forwarding; with wtf_enabled a faulting load whose page offset
  /// falls in another entry's offset range is forwarded that entry's bytes.
  /// Every load fills the TLB and cache for mapped targets, faulting or not.
  /// Throws ArchitecturalFault when a faulting load retires outside a window.
  LoadResult load_issue(VirtualAddress vaddr, std::uint32_t size,
                        AccessKind kind = AccessKind::Data);

  void drain_store_buffer() { store_buffer_.clear(); }
  std::size_t store_buffer_size() const { return store_buffer_.size(); }

  // -- TLB ------------------------------------------------------------------

  bool tlb_lookup(TlbKind kind, std::uint64_t vpn) const { return tlb_->lookup(kind, vpn); }
  void tlb_insert(TlbKind kind, std::uint64_t vpn, std::uint64_t frame) {
    tlb_->insert(kind, vpn, frame);
  }
  void tlb_flush_all(TlbKind kind) { tlb_->flush_all(kind); }

  /// Evicts target_vpn by touching ways+1 mapped pages congruent to it
  /// modulo the set count. Requires a registered eviction arena.
  void tlb_evict_vpn(TlbKind kind, std::uint64_t target_vpn);

  /// Registers the mapped, user-accessible page run used to build eviction
  /// sets. Must span at least sets*(ways+1) pages of the larger TLB.
  void set_eviction_arena(VirtualAddress base, std::uint64_t n_pages);

  // -- cache ----------------------------------------------------------------

  /// Removes the line backing vaddr from the cache. vaddr must be mapped.
  void flush_line(VirtualAddress vaddr);

  /// Returns the simulated reload latency for vaddr (hit or miss latency,
  /// plus walk latency on a TLB miss), then caches the line. With
  /// probability noise_p the hit/miss classification is flipped.
  std::uint64_t timed_access(VirtualAddress vaddr, AccessKind kind = AccessKind::Data);

  bool line_cached(VirtualAddress vaddr) const;

  // -- transient windows (driven via transient.hpp) -------------------------

  void begin_window(Suppression suppression);
  void end_window();
  bool in_window() const { return in_window_; }

  // -- transactions ----------------------------------------------------------

  Transaction tx_begin();
  void tx_commit(Transaction& tx);
  void tx_abort(Transaction& tx);

  // -- misc -------------------------------------------------------------------

  void set_supervisor(bool on) { supervisor_ = on; }
  bool supervisor() const { return supervisor_; }

  std::uint64_t cycles() const { return cycles_; }

  const MicroarchProfile& profile() const { return profile_; }
  AddressSpace& space() { return *space_; }
  const AddressSpace& space() const { return *space_; }
  PhysicalMemory& memory() { return *memory_; }
  TlbState& tlb() { return *tlb_; }
  CacheState& cache() { return *cache_; }
  Rng& rng() { return rng_; }

private:
  struct PendingWalk {
    TlbKind kind;
    std::uint64_t vpn;
    std::uint64_t frame;
    std::uint64_t entry_id;
  };

  struct TxWrite {
    VirtualAddress vaddr;
    std::uint64_t frame;
    std::uint32_t size;
    std::array<std::uint8_t, kMaxAccessBytes> data;
  };

  bool access_faults(const TranslateResult& tr) const;
  void fill_on_access(const TranslateResult& tr, VirtualAddress vaddr, AccessKind kind);
  void resolve_entry(StoreBufferEntry& entry, std::uint64_t frame);
  void commit_write(VirtualAddress vaddr, std::uint64_t frame,
                    std::span<const std::uint8_t> bytes);

  MicroarchProfile profile_;
  std::shared_ptr<AddressSpace> space_;
  std::shared_ptr<PhysicalMemory> memory_;
  std::shared_ptr<TlbState> tlb_;
  std::shared_ptr<CacheState> cache_;
  Rng rng_;

  std::vector<StoreBufferEntry> store_buffer_;
  std::uint64_t next_entry_id_ = 1;
  std::uint64_t cycles_ = 0;
  bool supervisor_ = false;

  bool in_window_ = false;
  Suppression window_suppression_ = Suppression::TsxLike;
  std::vector<PendingWalk> pending_walks_;

  std::uint64_t next_tx_id_ = 1;
  std::uint64_t active_tx_ = 0;
  std::set<std::uint64_t> tx_touched_;
  std::vector<TxWrite> tx_writes_;
  std::vector<std::uint64_t> tx_written_lines_;

  std::optional<VirtualAddress> arena_base_;
  std::uint64_t arena_pages_ = 0;
};

/// A machine: one address space and memory image plus cores sharing one TLB
/// and cache (a hyperthread pair when two cores are requested).
struct Machine {
  std::shared_ptr<AddressSpace> space;
  std::shared_ptr<PhysicalMemory> memory;
  std::shared_ptr<TlbState> tlb;
  std::shared_ptr<CacheState> cache;
  std::vector<std::unique_ptr<Core>> cores;

  Core& core(std::size_t i = 0) { return *cores.at(i); }
};

Machine make_machine(const MicroarchProfile& profile, std::uint64_t rng_seed,
                     std::size_t n_cores = 1);

}  // namespace storebounce

#endif
