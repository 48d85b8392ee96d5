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

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <set>

#include "storebounce/address.hpp"
#include "storebounce/errors.hpp"
#include "storebounce/layout.hpp"
#include "storebounce/rng.hpp"

using namespace storebounce;

TEST_CASE("canonicality follows the bit 47 sign-extension rule") {
  CHECK(is_canonical(va(0x00007fffffffffffull)));  // highest canonical user address
  CHECK(is_canonical(va(0xffff800000000000ull)));  // lowest canonical kernel address
  CHECK_FALSE(is_canonical(va(0x0000800000000000ull)));  // bit 47 set, 48..63 clear
  CHECK(is_canonical(va(0)));
  CHECK(is_canonical(va(0xffffffffffffffffull)));
  CHECK_FALSE(is_canonical(va(0x0001000000000000ull)));
}

TEST_CASE("vpn and page offset recompose the address") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const VirtualAddress addr = va(rng.next());
    CHECK(addr.vpn() * kPageSize + addr.page_offset() == addr.value);
  }
}

TEST_CASE("translate distinguishes mapped, unmapped and non-canonical") {
  AddressSpace space;
  const PageFlags kernel{.present = true, .user_accessible = false, .writable = true};
  space.map_region(va(0xffffffff80000000ull), 4, kernel);

  CHECK(space.translate(va(0x0000123456789000ull)).kind == TranslateKind::NotMapped);
  CHECK(space.translate(va(0x0000800000000000ull)).kind == TranslateKind::NonCanonical);

  const TranslateResult tr = space.translate(va(0xffffffff80000000ull));
  REQUIRE(tr.kind == TranslateKind::Mapped);
  CHECK_FALSE(tr.flags.user_accessible);
}

TEST_CASE("translate is pure: repeated calls agree") {
  AddressSpace space;
  space.map_region(va(0x7f0000000000ull), 8, PageFlags{true, true, true, false});
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const VirtualAddress addr = va(0x7f0000000000ull + rng.below(16 * kPageSize));
    const TranslateResult a = space.translate(addr);
    const TranslateResult b = space.translate(addr);
    CHECK(a.kind == b.kind);
    CHECK(a.frame == b.frame);
  }
}

TEST_CASE("map_region round trip returns the requested flags for every page") {
  AddressSpace space;
  const PageFlags flags{.present = true, .user_accessible = true, .writable = false};
  space.map_region(va(0x7f0000100000ull), 16, flags);
  for (int i = 0; i < 16; ++i) {
    const TranslateResult tr = space.translate(va(0x7f0000100000ull + i * kPageSize));
    REQUIRE(tr.kind == TranslateKind::Mapped);
    CHECK(tr.flags == flags);
  }
}

TEST_CASE("frames are sequential and never shared without an alias") {
  AddressSpace space;
  space.map_region(va(0x7f0000000000ull), 32, PageFlags{true, true, true, false});
  std::set<std::uint64_t> frames;
  for (int i = 0; i < 32; ++i) {
    frames.insert(space.translate(va(0x7f0000000000ull + i * kPageSize)).frame);
  }
  CHECK(frames.size() == 32);

  space.map_alias(va(0x7f0000200000ull), 1, va(0x7f0000000000ull));
  CHECK(space.translate(va(0x7f0000200000ull)).frame ==
        space.translate(va(0x7f0000000000ull)).frame);
}

TEST_CASE("map_region rejects overlap, misalignment and the canonical hole") {
  AddressSpace space;
  space.map_region(va(0x7f0000000000ull), 4, PageFlags{true, true, true, false});
  CHECK_THROWS_AS(space.map_region(va(0x7f0000002000ull), 1, PageFlags{true, true, true, false}),
                  ConfigError);
  CHECK_THROWS_AS(space.map_region(va(0x7f0000000123ull), 1, PageFlags{true, true, true, false}),
                  ConfigError);
  CHECK_THROWS_AS(space.map_region(va(0x00007ffffffff000ull), 2,
                                   PageFlags{true, true, true, false}),
                  ConfigError);
}

TEST_CASE("a protected page must be present") {
  AddressSpace space;
  PageFlags bad{.present = false, .user_accessible = false, .writable = false,
                .protected_region = true};
  CHECK_THROWS_AS(space.map_region(va(0x7f0000000000ull), 1, bad), ConfigError);
}

TEST_CASE("generated layouts satisfy every placement invariant") {
  const std::vector<ModuleSpec> table = {{"alpha", 12}, {"beta", 134}, {"gamma", 7}};
  for (std::uint64_t seed = 0; seed < 1200; ++seed) {
    for (OsProfile os : {OsProfile::Linux, OsProfile::Windows}) {
      const KernelLayout layout = generate_layout(seed, os, table);
      const LayoutConstants consts = layout_constants(os);

      const std::uint64_t delta = layout.kernel_base.value - consts.kernel_base_start;
      CHECK(delta % consts.kernel_base_align == 0);
      CHECK(delta / consts.kernel_base_align < consts.kernel_base_slots);

      if (os == OsProfile::Linux) {
        const std::uint64_t ddelta = layout.direct_map_base.value - consts.direct_map_start;
        CHECK(ddelta % consts.direct_map_align == 0);
        CHECK(ddelta / consts.direct_map_align < consts.direct_map_slots);
      } else {
        CHECK(layout.direct_map_base.value == 0);
      }

      // Modules: inside the region, 4 KiB aligned by construction, separated
      // by at least one unmapped page, and disjoint from the kernel image.
      std::vector<ModuleExtent> sorted = layout.modules;
      std::sort(sorted.begin(), sorted.end(),
                [](const ModuleExtent& a, const ModuleExtent& b) { return a.start < b.start; });
      const std::uint64_t region_vpn = consts.module_region_base >> kPageShift;
      std::uint64_t prev_end = layout.kernel_base.vpn() + layout.kernel_size_pages;
      if (prev_end < region_vpn) prev_end = region_vpn;
      for (const ModuleExtent& m : sorted) {
        CHECK(m.start.vpn() >= region_vpn);
        CHECK(m.start.vpn() + m.size_pages - region_vpn <= consts.module_region_pages);
        CHECK(m.start.vpn() >= prev_end + 1);
        prev_end = m.start.vpn() + m.size_pages;
      }
    }
  }
}

TEST_CASE("layout generation is deterministic and shuffles module order by seed") {
  const std::vector<ModuleSpec> table = {{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}, {"e", 5}};
  const KernelLayout one = generate_layout(42, OsProfile::Linux, table);
  const KernelLayout two = generate_layout(42, OsProfile::Linux, table);
  REQUIRE(one.modules.size() == two.modules.size());
  for (std::size_t i = 0; i < one.modules.size(); ++i) {
    CHECK(one.modules[i].name == two.modules[i].name);
    CHECK(one.modules[i].start == two.modules[i].start);
  }

  bool any_order_differs = false;
  for (std::uint64_t seed = 0; seed < 32 && !any_order_differs; ++seed) {
    const KernelLayout other = generate_layout(seed, OsProfile::Linux, table);
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (other.modules[i].name != one.modules[i].name) any_order_differs = true;
    }
  }
  CHECK(any_order_differs);
}

TEST_CASE("module extents match their specs") {
  const KernelLayout layout =
      generate_layout(1, OsProfile::Linux, {{"usbhid", 12}, {"bluetooth", 134}});
  REQUIRE(layout.modules.size() == 2);
  for (const ModuleExtent& m : layout.modules) {
    if (m.name == "usbhid") CHECK(m.size_pages == 12);
    if (m.name == "bluetooth") CHECK(m.size_pages == 134);
  }
}

TEST_CASE("windows kernel base is a 2 MiB slot below 16 GiB") {
  for (std::uint64_t seed : {2ull, 77ull, 4093ull}) {
    const KernelLayout layout = generate_layout(seed, OsProfile::Windows, {});
    const std::uint64_t delta = layout.kernel_base.value - 0xfffff80000000000ull;
    CHECK(delta % (2ull << 20) == 0);
    CHECK(delta < (16ull << 30));
  }
}

TEST_CASE("an oversized module table overflows the region") {
  std::vector<ModuleSpec> table;
  for (int i = 0; i < 9; ++i) {
    table.push_back({"huge" + std::to_string(i), 30000});
  }
  CHECK_THROWS_AS(generate_layout(5, OsProfile::Linux, table), ModuleRegionOverflow);
}

TEST_CASE("realized layouts translate as supervisor pages") {
  const KernelLayout layout = generate_layout(9, OsProfile::Linux, {{"usbhid", 12}});
  AddressSpace space;
  realize_layout(layout, space);

  const TranslateResult base = space.translate(layout.kernel_base);
  REQUIRE(base.kind == TranslateKind::Mapped);
  CHECK_FALSE(base.flags.user_accessible);

  CHECK(space.translate(layout.direct_map_base).kind == TranslateKind::Mapped);
  for (const ModuleExtent& m : layout.modules) {
    CHECK(space.translate(m.start).kind == TranslateKind::Mapped);
    CHECK(space.translate(m.start.offset_by((m.size_pages - 1) * kPageSize)).kind ==
          TranslateKind::Mapped);
    CHECK(space.translate(m.start.offset_by(m.size_pages * kPageSize)).kind ==
          TranslateKind::NotMapped);
  }
}

TEST_CASE("layout dump carries base addresses and module extents") {
  const KernelLayout layout =
      generate_layout(3, OsProfile::Linux, {{"usbhid", 12}, {"bluetooth", 134}});
  const nlohmann::json j = nlohmann::json::parse(layout_to_json(layout));
  CHECK(j.contains("kernel_base"));
  CHECK(j.contains("direct_map_base"));
  REQUIRE(j.at("modules").size() == 2);
  std::uint64_t seen = 0;
  for (const auto& m : j.at("modules")) {
    seen += m.at("size").get<std::uint64_t>();
  }
  CHECK(seen == 12 + 134);
}
