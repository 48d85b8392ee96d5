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

#include "storebounce/layout.hpp"

#include <json.hpp>

#include "storebounce/errors.hpp"
#include "storebounce/rng.hpp"

namespace storebounce {

namespace {

constexpr std::uint64_t kMiB = std::uint64_t{1} << 20;
constexpr std::uint64_t kGiB = std::uint64_t{1} << 30;

// The kernel image is modeled as 16 MiB of contiguous supervisor pages.
constexpr std::uint64_t kKernelImagePages = 4096;

// Only the first pages of the direct-physical map are materialized; the
// scans only need the translation at the base to succeed.
constexpr std::uint64_t kDirectMapPages = 64;

std::string hex_string(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

const char* to_string(OsProfile os) {
  return os == OsProfile::Linux ? "linux" : "windows";
}

LayoutConstants layout_constants(OsProfile os) {
  if (os == OsProfile::Linux) {
    return LayoutConstants{
        .kernel_base_start = 0xffffffff80000000ull,
        .kernel_base_slots = 512,
        .kernel_base_align = 2 * kMiB,
        .direct_map_start = 0xffff888000000000ull,
        .direct_map_slots = std::uint64_t{1} << 16,
        .direct_map_align = kGiB,
        .module_region_base = 0xffffffffc0000000ull,
        .module_region_pages = kGiB / kPageSize,
    };
  }
  return LayoutConstants{
      .kernel_base_start = 0xfffff80000000000ull,
      .kernel_base_slots = 8192,
      .kernel_base_align = 2 * kMiB,
      .direct_map_start = 0,
      .direct_map_slots = 0,
      .direct_map_align = kGiB,
      .module_region_base = 0xfffff80400000000ull,
      .module_region_pages = kGiB / kPageSize,
  };
}

KernelLayout generate_layout(std::uint64_t seed, OsProfile os,
                             const std::vector<ModuleSpec>& module_table) {
  const LayoutConstants consts = layout_constants(os);
  Rng rng(seed);

  KernelLayout layout;
  layout.os = os;
  layout.kernel_base =
      va(consts.kernel_base_start + rng.below(consts.kernel_base_slots) * consts.kernel_base_align);
  layout.kernel_size_pages = kKernelImagePages;
  layout.direct_map_base =
      consts.direct_map_slots == 0
          ? va(0)
          : va(consts.direct_map_start + rng.below(consts.direct_map_slots) * consts.direct_map_align);

  std::vector<ModuleSpec> order = module_table;
  rng.shuffle(order);

  // The tail of a high kernel base can reach into the module region; modules
  // start past it, separated from the image like from each other.
  const std::uint64_t region_base_vpn = consts.module_region_base >> kPageShift;
  const std::uint64_t kernel_end_vpn = layout.kernel_base.vpn() + layout.kernel_size_pages;
  std::uint64_t cursor = 0;  // page index into the module region
  if (kernel_end_vpn > region_base_vpn) {
    cursor = kernel_end_vpn - region_base_vpn;
  }

  for (const ModuleSpec& spec : order) {
    const std::uint64_t gap = 1 + rng.below(4);
    cursor += gap;
    if (cursor + spec.size_pages > consts.module_region_pages) {
      throw ModuleRegionOverflow();
    }
    layout.modules.push_back(
        ModuleExtent{spec.name, va_of_vpn(region_base_vpn + cursor), spec.size_pages});
    cursor += spec.size_pages;
  }
  return layout;
}

void realize_layout(const KernelLayout& layout, AddressSpace& space) {
  const PageFlags kernel_flags{.present = true,
                               .user_accessible = false,
                               .writable = true,
                               .protected_region = false};
  space.map_region(layout.kernel_base, layout.kernel_size_pages, kernel_flags);
  if (layout.direct_map_base.value != 0) {
    space.map_region(layout.direct_map_base, kDirectMapPages, kernel_flags);
  }
  for (const ModuleExtent& module : layout.modules) {
    space.map_region(module.start, module.size_pages, kernel_flags);
  }
}

std::string layout_to_json(const KernelLayout& layout) {
  nlohmann::json j;
  j["kernel_base"] = hex_string(layout.kernel_base.value);
  j["direct_map_base"] = hex_string(layout.direct_map_base.value);
  j["modules"] = nlohmann::json::array();
  for (const ModuleExtent& module : layout.modules) {
    j["modules"].push_back({{"name", module.name},
                            {"start", hex_string(module.start.value)},
                            {"size", module.size_pages}});
  }
  return j.dump(2);
}

}  // namespace storebounce
