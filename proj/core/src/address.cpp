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

#include "storebounce/address.hpp"

#include <algorithm>
#include <cstring>

#include "storebounce/errors.hpp"

namespace storebounce {

TranslateResult AddressSpace::translate(VirtualAddress addr) const {
  if (!is_canonical(addr)) {
    return {TranslateKind::NonCanonical, 0, {}};
  }
  auto it = pages_.find(addr.vpn());
  if (it == pages_.end()) {
    return {TranslateKind::NotMapped, 0, {}};
  }
  return {TranslateKind::Mapped, it->second.frame, it->second.flags};
}

void AddressSpace::map_region(VirtualAddress start, std::uint64_t n_pages, PageFlags flags) {
  if (start.page_offset() != 0) {
    throw ConfigError("map_region: start not page-aligned");
  }
  if (flags.protected_region && !flags.present) {
    throw ConfigError("map_region: a protected page must be present");
  }
  const std::uint64_t base_vpn = start.vpn();
  for (std::uint64_t i = 0; i < n_pages; ++i) {
    const std::uint64_t vpn = base_vpn + i;
    if (!is_canonical(va_of_vpn(vpn))) {
      throw ConfigError("map_region: range crosses the non-canonical hole");
    }
    if (pages_.count(vpn)) {
      throw ConfigError("map_region: overlaps an existing mapping");
    }
  }
  for (std::uint64_t i = 0; i < n_pages; ++i) {
    pages_[base_vpn + i] = Entry{next_frame_++ & kFrameMask, flags};
  }
}

void AddressSpace::map_alias(VirtualAddress start, std::uint64_t n_pages,
                             VirtualAddress target) {
  if (start.page_offset() != 0 || target.page_offset() != 0) {
    throw ConfigError("map_alias: addresses not page-aligned");
  }
  const std::uint64_t base_vpn = start.vpn();
  const std::uint64_t target_vpn = target.vpn();
  for (std::uint64_t i = 0; i < n_pages; ++i) {
    if (!is_canonical(va_of_vpn(base_vpn + i))) {
      throw ConfigError("map_alias: range crosses the non-canonical hole");
    }
    if (pages_.count(base_vpn + i)) {
      throw ConfigError("map_alias: overlaps an existing mapping");
    }
    auto it = pages_.find(target_vpn + i);
    if (it == pages_.end()) {
      throw ConfigError("map_alias: target page not mapped");
    }
  }
  for (std::uint64_t i = 0; i < n_pages; ++i) {
    pages_[base_vpn + i] = pages_.at(target_vpn + i);
  }
}

void AddressSpace::unmap_region(VirtualAddress start, std::uint64_t n_pages) {
  const std::uint64_t base_vpn = start.vpn();
  for (std::uint64_t i = 0; i < n_pages; ++i) {
    pages_.erase(base_vpn + i);
  }
}

std::uint8_t PhysicalMemory::read_byte(std::uint64_t frame, std::uint64_t offset) const {
  auto it = frames_.find(frame);
  if (it == frames_.end()) return 0;
  return it->second[offset];
}

void PhysicalMemory::write_byte(std::uint64_t frame, std::uint64_t offset, std::uint8_t value) {
  auto it = frames_.find(frame);
  if (it == frames_.end()) {
    it = frames_.emplace(frame, Frame{}).first;
  }
  it->second[offset] = value;
}

void PhysicalMemory::read(std::uint64_t frame, std::uint64_t offset,
                          std::span<std::uint8_t> out) const {
  auto it = frames_.find(frame);
  if (it == frames_.end()) {
    std::fill(out.begin(), out.end(), 0);
    return;
  }
  std::memcpy(out.data(), it->second.data() + offset, out.size());
}

void PhysicalMemory::write(std::uint64_t frame, std::uint64_t offset,
                           std::span<const std::uint8_t> bytes) {
  auto it = frames_.find(frame);
  if (it == frames_.end()) {
    it = frames_.emplace(frame, Frame{}).first;
  }
  std::memcpy(it->second.data() + offset, bytes.data(), bytes.size());
}

namespace {
bool frame_is_zero(const std::array<std::uint8_t, kPageSize>& frame) {
  return std::all_of(frame.begin(), frame.end(), [](std::uint8_t b) { return b == 0; });
}
}  // namespace

// Lazily allocated all-zero frames compare equal to absent ones.
bool operator==(const PhysicalMemory& a, const PhysicalMemory& b) {
  auto covered_by = [](const PhysicalMemory& x, const PhysicalMemory& y) {
    for (const auto& [frame, data] : x.frames_) {
      auto it = y.frames_.find(frame);
      if (it == y.frames_.end()) {
        if (!frame_is_zero(data)) return false;
      } else if (data != it->second) {
        return false;
      }
    }
    return true;
  };
  return covered_by(a, b) && covered_by(b, a);
}

}  // namespace storebounce
