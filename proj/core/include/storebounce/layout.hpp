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

#ifndef STOREBOUNCE_LAYOUT_HPP
#define STOREBOUNCE_LAYOUT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "storebounce/address.hpp"

namespace storebounce {

enum class OsProfile { Linux, Windows };

const char* to_string(OsProfile os);

/// Search-space constants for randomized kernel placement.
struct LayoutConstants {
  std::uint64_t kernel_base_start;   // lowest possible kernel base
  std::uint64_t kernel_base_slots;   // number of 2 MiB-aligned candidates
  std::uint64_t kernel_base_align;   // 2 MiB
  std::uint64_t direct_map_start;    // 0 when the OS has no direct-physical map
  std::uint64_t direct_map_slots;    // 1 GiB-aligned candidates
  std::uint64_t direct_map_align;
  std::uint64_t module_region_base;  // 1 GiB region, modules 4 KiB-aligned inside
  std::uint64_t module_region_pages;
};

LayoutConstants layout_constants(OsProfile os);

struct ModuleSpec {
  std::string name;
  std::uint64_t size_pages = 0;
};

struct ModuleExtent {
  std::string name;
  VirtualAddress start;
  std::uint64_t size_pages = 0;
};

/// One randomized boot image: kernel base, direct-physical map, and the
/// loaded-module extents. Ground truth for the scenarios; the attack side
/// never sees it.
struct KernelLayout {
  OsProfile os = OsProfile::Linux;
  VirtualAddress kernel_base;
  std::uint64_t kernel_size_pages = 0;
  VirtualAddress direct_map_base;  // value 0 when absent (Windows)
  std::vector<ModuleExtent> modules;
};

/// Deterministically generates a layout from a seed. Module order is shuffled
/// and gaps of at least one unmapped page separate modules. Throws
/// ModuleRegionOverflow when the table cannot be placed.
KernelLayout generate_layout(std::uint64_t seed, OsProfile os,
                             const std::vector<ModuleSpec>& module_table);

/// Materializes the layout into an address space: kernel image pages, the
/// base run of the direct-physical map (first 64 pages), and module pages,
/// all supervisor-only.
void realize_layout(const KernelLayout& layout, AddressSpace& space);

/// {kernel_base, direct_map_base, modules:[{name,start,size}]} as JSON text,
/// for test oracles and the CLI.
std::string layout_to_json(const KernelLayout& layout);

}  // namespace storebounce

#endif
