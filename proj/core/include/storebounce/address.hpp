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

#ifndef STOREBOUNCE_ADDRESS_HPP
#define STOREBOUNCE_ADDRESS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace storebounce {

inline constexpr std::uint64_t kPageSize = 4096;
inline constexpr std::uint64_t kPageShift = 12;
inline constexpr std::uint64_t kLineSize = 64;
inline constexpr std::uint64_t kFrameMask = (std::uint64_t{1} << 52) - 1;

/// A 64-bit virtual address. vpn() and page_offset() recompose to value.
struct VirtualAddress {
  std::uint64_t value = 0;

  constexpr std::uint64_t vpn() const { return value >> kPageShift; }
  constexpr std::uint64_t page_offset() const { return value & (kPageSize - 1); }

  constexpr VirtualAddress page_base() const { return {value & ~(kPageSize - 1)}; }
  constexpr VirtualAddress offset_by(std::uint64_t delta) const { return {value + delta}; }

  friend constexpr bool operator==(VirtualAddress a, VirtualAddress b) { return a.value == b.value; }
  friend constexpr bool operator<(VirtualAddress a, VirtualAddress b) { return a.value < b.value; }
};

constexpr VirtualAddress va(std::uint64_t value) { return VirtualAddress{value}; }

constexpr VirtualAddress va_of_vpn(std::uint64_t vpn) { return VirtualAddress{vpn << kPageShift}; }

/// An address is canonical iff bits 47..63 all equal bit 47.
constexpr bool is_canonical(VirtualAddress addr) {
  const std::uint64_t upper = addr.value >> 47;  // bits 47..63
  return upper == 0 || upper == 0x1FFFF;
}

struct PageFlags {
  bool present = false;
  bool user_accessible = false;
  bool writable = false;
  bool protected_region = false;  // enclave-style page: backed, architecturally unreadable

  friend bool operator==(const PageFlags&, const PageFlags&) = default;
};

enum class TranslateKind { Mapped, NotMapped, NonCanonical };

struct TranslateResult {
  TranslateKind kind = TranslateKind::NotMapped;
  std::uint64_t frame = 0;
  PageFlags flags;

  bool mapped() const { return kind == TranslateKind::Mapped; }
};

/// Virtual-to-physical mapping at fixed 4 KiB granularity. Frames come from a
/// sequential 52-bit counter; two vpns share a frame only via map_alias.
class AddressSpace {
public:
  struct Entry {
    std::uint64_t frame = 0;
    PageFlags flags;
  };

  TranslateResult translate(VirtualAddress addr) const;

  /// Maps n_pages starting at `start` (page-aligned, canonical) with fresh
  /// sequential frames. Overlapping an existing mapping is an error.
  void map_region(VirtualAddress start, std::uint64_t n_pages, PageFlags flags);

  /// Maps n_pages at `start` onto the frames already backing `target`.
  void map_alias(VirtualAddress start, std::uint64_t n_pages, VirtualAddress target);

  void unmap_region(VirtualAddress start, std::uint64_t n_pages);

  bool is_mapped(std::uint64_t vpn) const { return pages_.count(vpn) != 0; }

  std::size_t page_count() const { return pages_.size(); }

  const std::unordered_map<std::uint64_t, Entry>& pages() const { return pages_; }

private:
  std::unordered_map<std::uint64_t, Entry> pages_;
  std::uint64_t next_frame_ = 1;
};

/// Byte-addressable physical memory, allocated lazily per frame and
/// zero-filled. This is the architectural memory image.
class PhysicalMemory {
public:
  std::uint8_t read_byte(std::uint64_t frame, std::uint64_t offset) const;
  void write_byte(std::uint64_t frame, std::uint64_t offset, std::uint8_t value);

  void read(std::uint64_t frame, std::uint64_t offset, std::span<std::uint8_t> out) const;
  void write(std::uint64_t frame, std::uint64_t offset, std::span<const std::uint8_t> bytes);

  /// Deep copy, for roll-back assertions in tests.
  PhysicalMemory snapshot() const { return *this; }

  friend bool operator==(const PhysicalMemory& a, const PhysicalMemory& b);

private:
  using Frame = std::array<std::uint8_t, kPageSize>;
  std::unordered_map<std::uint64_t, Frame> frames_;
};

}  // namespace storebounce

#endif
