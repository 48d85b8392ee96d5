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

#ifndef STOREBOUNCE_TESTS_TEST_UTIL_HPP
#define STOREBOUNCE_TESTS_TEST_UTIL_HPP

#include "storebounce/storebounce.hpp"

namespace storebounce::test {

inline constexpr std::uint64_t kUser = 0x00007f1000000000ull;    // plain user pages
inline constexpr std::uint64_t kKernel = 0xffffc00000000000ull;  // supervisor pages
inline constexpr std::uint64_t kProbe = 0x00007f2000000000ull;
inline constexpr std::uint64_t kArena = 0x00007f3000000000ull;
inline constexpr std::uint64_t kArenaPages = 256;

inline constexpr PageFlags user_flags() {
  return PageFlags{.present = true, .user_accessible = true, .writable = true,
                   .protected_region = false};
}

inline constexpr PageFlags kernel_flags() {
  return PageFlags{.present = true, .user_accessible = false, .writable = true,
                   .protected_region = false};
}

struct Rig {
  Machine machine;
  ProbeArray probe{va(kProbe)};

  Core& core(std::size_t i = 0) { return machine.core(i); }
};

/// A machine with user pages, kernel pages, a probe array and an eviction
/// arena already mapped.
inline Rig make_rig(const MicroarchProfile& profile = skylake_profile(), std::uint64_t seed = 1,
                    std::size_t n_cores = 1, std::uint64_t user_pages = 64,
                    std::uint64_t kernel_pages = 64) {
  Rig rig{make_machine(profile, seed, n_cores)};
  AddressSpace& space = *rig.machine.space;
  space.map_region(va(kUser), user_pages, user_flags());
  space.map_region(va(kKernel), kernel_pages, kernel_flags());
  space.map_region(va(kProbe), ProbeArray::n_pages, user_flags());
  space.map_region(va(kArena), kArenaPages, user_flags());
  for (auto& core : rig.machine.cores) {
    core->set_eviction_arena(va(kArena), kArenaPages);
  }
  return rig;
}

inline std::uint8_t read_memory_byte(Machine& machine, VirtualAddress addr) {
  const TranslateResult tr = machine.space->translate(addr);
  return machine.memory->read_byte(tr.frame, addr.page_offset());
}

/// First seed at or after `from` whose kernel image stays clear of the
/// module region, so module extents are the only mapped runs there.
inline std::uint64_t seed_without_kernel_bleed(OsProfile os, std::uint64_t from = 1) {
  const LayoutConstants consts = layout_constants(os);
  for (std::uint64_t seed = from;; ++seed) {
    const KernelLayout layout = generate_layout(seed, os, {});
    if (layout.kernel_base.vpn() + layout.kernel_size_pages <=
        (consts.module_region_base >> kPageShift)) {
      return seed;
    }
  }
}

}  // namespace storebounce::test

#endif
