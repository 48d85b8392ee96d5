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

#include <cmath>
#include <map>

#include "test_util.hpp"

using namespace storebounce;
using namespace storebounce::test;

namespace {

// Reference model: per set, most-recently-used order replayed from the
// access sequence.
struct LruOracle {
  std::uint32_t sets, ways;
  std::map<std::uint64_t, std::vector<std::uint64_t>> mru;  // set -> vpns, newest first

  void access(std::uint64_t vpn) {
    auto& list = mru[vpn % sets];
    std::erase(list, vpn);
    list.insert(list.begin(), vpn);
    if (list.size() > ways) list.resize(ways);
  }

  bool resident(std::uint64_t vpn) const {
    auto it = mru.find(vpn % sets);
    if (it == mru.end()) return false;
    return std::find(it->second.begin(), it->second.end(), vpn) != it->second.end();
  }
};

}  // namespace

TEST_CASE("TLB replacement matches an LRU oracle replaying the access sequence") {
  const TlbGeometry geo{4, 2};
  TlbState tlb(geo, geo);
  LruOracle oracle{geo.sets, geo.ways, {}};

  Rng rng(11);
  for (int i = 0; i < 5000; ++i) {
    const std::uint64_t vpn = rng.below(64);
    if (rng.chance(0.5)) {
      tlb.insert(TlbKind::Data, vpn, vpn + 1000);
      oracle.access(vpn);
    } else if (tlb.touch(TlbKind::Data, vpn)) {
      oracle.access(vpn);  // refresh on hit only
    }
    const std::uint64_t check = rng.below(64);
    CHECK(tlb.lookup(TlbKind::Data, check) == oracle.resident(check));
  }
}

TEST_CASE("filling a set and inserting one more evicts the oldest") {
  TlbState tlb({16, 4}, {8, 8});
  for (std::uint64_t k = 0; k < 4; ++k) {
    tlb.insert(TlbKind::Data, 3 + 16 * k, k);
  }
  CHECK(tlb.lookup(TlbKind::Data, 3));
  tlb.insert(TlbKind::Data, 3 + 16 * 4, 99);
  CHECK_FALSE(tlb.lookup(TlbKind::Data, 3));  // oldest way gone
  for (std::uint64_t k = 1; k <= 4; ++k) {
    CHECK(tlb.lookup(TlbKind::Data, 3 + 16 * k));
  }
}

TEST_CASE("eviction targets one set and leaves others alone") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const std::uint64_t v = va(kUser).vpn();       // some set s
  const std::uint64_t w = va(kUser).vpn() + 1;   // set s+1
  core.tlb_insert(TlbKind::Data, v, 1);
  core.tlb_insert(TlbKind::Data, w, 2);

  core.tlb_evict_vpn(TlbKind::Data, v);
  CHECK_FALSE(core.tlb_lookup(TlbKind::Data, v));
  CHECK(core.tlb_lookup(TlbKind::Data, w));
}

TEST_CASE("eviction also works for the iTLB") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const std::uint64_t v = va(kKernel).vpn();
  core.tlb_insert(TlbKind::Instr, v, 1);
  core.tlb_evict_vpn(TlbKind::Instr, v);
  CHECK_FALSE(core.tlb_lookup(TlbKind::Instr, v));
}

TEST_CASE("store buffer capacity stalls exactly on the entry past capacity") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const std::uint8_t x[1] = {0x11};
  for (std::uint32_t i = 0; i < core.profile().store_buffer_capacity; ++i) {
    core.store_issue(va(kUser).offset_by(i * 8), x);
  }
  CHECK_THROWS_AS(core.store_issue(va(kUser).offset_by(4000), x), StallError);
  core.drain_store_buffer();
  CHECK_NOTHROW(core.store_issue(va(kUser), x));
}

TEST_CASE("store to a TLB-resident page forwards within the same window") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress p = va(kKernel);
  core.tlb_insert(TlbKind::Data, p.vpn(), core.space().translate(p).frame);

  with_window(core, Suppression::TsxLike, [&] {
    const std::uint8_t x[1] = {0x42};
    core.store_issue(p, x);
    const LoadResult r = core.load_issue(p, 1);
    CHECK(r.source == LoadSource::StoreForward);
    CHECK(r.byte() == 0x42);
    CHECK(r.faulted);  // supervisor page, user mode: architecturally a fault
  });
}

TEST_CASE("store to a mapped page missing the TLB does not forward until the next window") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress p = va(kKernel).offset_by(kPageSize);
  REQUIRE_FALSE(core.tlb_lookup(TlbKind::Data, p.vpn()));

  with_window(core, Suppression::TsxLike, [&] {
    const std::uint8_t x[1] = {0x42};
    core.store_issue(p, x);
    const LoadResult r = core.load_issue(p, 1);
    CHECK(r.source == LoadSource::CacheOrMemory);  // unresolved entry blocks forwarding
    CHECK(r.byte() == 0);
  });
  // The walk finished when the window closed.
  CHECK(core.tlb_lookup(TlbKind::Data, p.vpn()));

  with_window(core, Suppression::TsxLike, [&] {
    const std::uint8_t x[1] = {0x42};
    core.store_issue(p, x);
    const LoadResult r = core.load_issue(p, 1);
    CHECK(r.source == LoadSource::StoreForward);
    CHECK(r.byte() == 0x42);
  });
}

TEST_CASE("store to a non-canonical address forwards in the same window") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress p = va(0x0000800000000000ull);

  with_window(core, Suppression::TsxLike, [&] {
    const std::uint8_t x[1] = {0x77};
    core.store_issue(p, x);
    const LoadResult r = core.load_issue(p, 1);
    CHECK(r.source == LoadSource::StoreForward);
    CHECK(r.byte() == 0x77);
  });
}

TEST_CASE("store to an unmapped address never forwards") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress p = va(0x00007f9000000000ull);

  for (int attempt = 0; attempt < 3; ++attempt) {
    with_window(core, Suppression::TsxLike, [&] {
      const std::uint8_t x[1] = {0x42};
      core.store_issue(p, x);
      const LoadResult r = core.load_issue(p, 1);
      CHECK(r.source == LoadSource::CacheOrMemory);
      CHECK(r.faulted);
      CHECK(r.byte() == 0);
    });
  }
}

TEST_CASE("forwarding round trip holds for random markers and offsets") {
  Rig rig = make_rig();
  Core& core = rig.core();
  Rng rng(23);
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t page = rng.below(64);
    const std::uint64_t offset = rng.below(kPageSize - 32);
    const VirtualAddress p = va(kUser).offset_by(page * kPageSize + offset);
    const std::uint8_t x = static_cast<std::uint8_t>(1 + rng.below(255));
    core.tlb_insert(TlbKind::Data, p.vpn(), core.space().translate(p).frame);
    with_window(core, Suppression::TsxLike, [&] {
      const std::uint8_t data[1] = {x};
      core.store_issue(p, data);
      const LoadResult r = core.load_issue(p, 1);
      CHECK(r.source == LoadSource::StoreForward);
      CHECK(r.byte() == x);
    });
  }
}

TEST_CASE("loads without a buffered store never report forwarding") {
  MicroarchProfile profile = skylake_profile();
  profile.wtf_enabled = false;
  Rig rig = make_rig(profile);
  Core& core = rig.core();
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const VirtualAddress p = va(kUser).offset_by(rng.below(64) * kPageSize + rng.below(4088));
    const LoadResult r = core.load_issue(p, 1);
    CHECK(r.source == LoadSource::CacheOrMemory);
  }
}

TEST_CASE("partial same-address overlap blocks forwarding with stale data") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress p = va(kUser).offset_by(256);
  core.tlb_insert(TlbKind::Data, p.vpn(), core.space().translate(p).frame);

  with_window(core, Suppression::TsxLike, [&] {
    const std::uint8_t wide[8] = {1, 2, 3, 4, 5, 6, 7, 8};
    core.store_issue(p.offset_by(4), wide);  // [260, 268)
    const LoadResult r = core.load_issue(p, 8);  // [256, 264): overlap, not contained
    CHECK(r.source == LoadSource::CacheOrMemory);
  });
}

TEST_CASE("write-transient forwarding fires exactly inside the stored offset range") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress fault_page = va(0x00007f9000000000ull);  // unmapped: loads fault

  for (const std::uint32_t size : {1u, 2u, 4u, 8u, 16u, 32u}) {
    const std::uint64_t o = 512;
    std::vector<std::uint8_t> data(size);
    for (std::uint32_t i = 0; i < size; ++i) data[i] = static_cast<std::uint8_t>(0xA0 + i);

    with_window(core, Suppression::TsxLike, [&] {
      core.store_issue(va(kUser).offset_by(o), std::span<const std::uint8_t>(data));

      const LoadResult below = core.load_issue(fault_page.offset_by(o - 1), 1);
      CHECK(below.source == LoadSource::CacheOrMemory);

      const LoadResult first = core.load_issue(fault_page.offset_by(o), 1);
      CHECK(first.source == LoadSource::WtForward);
      CHECK(first.byte() == 0xA0);

      const LoadResult last = core.load_issue(fault_page.offset_by(o + size - 1), 1);
      CHECK(last.source == LoadSource::WtForward);
      CHECK(last.byte() == 0xA0 + size - 1);

      const LoadResult past = core.load_issue(fault_page.offset_by(o + size), 1);
      CHECK(past.source == LoadSource::CacheOrMemory);
    });
    core.drain_store_buffer();
  }
}

TEST_CASE("write-transient forwarding requires a faulting load") {
  Rig rig = make_rig();
  Core& core = rig.core();
  with_window(core, Suppression::TsxLike, [&] {
    const std::uint8_t data[8] = {9, 9, 9, 9, 9, 9, 9, 9};
    core.store_issue(va(kUser).offset_by(100), data);
    // Same offset on another mapped user page: no fault, no false match.
    const LoadResult r = core.load_issue(va(kUser).offset_by(kPageSize + 100), 1);
    CHECK(r.source == LoadSource::CacheOrMemory);
  });
}

TEST_CASE("the pentium4 profile never produces write-transient forwarding") {
  Rig rig = make_rig(pentium4_profile());
  Core& core = rig.core();
  const VirtualAddress fault_page = va(0x00007f9000000000ull);
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const std::uint32_t size = 1u << rng.below(6);
    const std::uint64_t o = rng.below(kPageSize - 32);
    std::vector<std::uint8_t> data(size, 0x5A);
    with_window(core, Suppression::TsxLike, [&] {
      core.store_issue(va(kUser).offset_by(o), std::span<const std::uint8_t>(data));
      const LoadResult r = core.load_issue(fault_page.offset_by(o + rng.below(size)), 1);
      CHECK(r.source == LoadSource::CacheOrMemory);
    });
    core.drain_store_buffer();
  }
}

TEST_CASE("faulting loads raise outside windows and fill the TLB inside them") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress p = va(kKernel).offset_by(2 * kPageSize);
  CHECK_THROWS_AS(core.load_issue(p, 1), ArchitecturalFault);

  with_window(core, Suppression::TsxLike, [&] {
    const LoadResult r = core.load_issue(p, 1);
    CHECK(r.faulted);
    CHECK(r.byte() == 0);
  });
  CHECK(core.tlb_lookup(TlbKind::Data, p.vpn()));  // fill persists past the squash
}

TEST_CASE("flush then access misses; the second access hits") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress p = va(kUser).offset_by(3 * kPageSize);
  core.tlb_insert(TlbKind::Data, p.vpn(), core.space().translate(p).frame);

  core.flush_line(p);
  const std::uint64_t miss = core.timed_access(p);
  CHECK(miss == core.profile().lat_cache_miss);
  const std::uint64_t hit = core.timed_access(p);
  CHECK(hit == core.profile().lat_cache_hit);
}

TEST_CASE("a TLB miss adds the walk latency to the timed access") {
  Rig rig = make_rig();
  Core& core = rig.core();
  const VirtualAddress p = va(kUser).offset_by(5 * kPageSize);
  REQUIRE_FALSE(core.tlb_lookup(TlbKind::Data, p.vpn()));
  core.flush_line(p);
  CHECK(core.timed_access(p) == core.profile().lat_cache_miss + core.profile().lat_walk);
  // Walk latency alone keeps a cached line classified as a hit.
  core.tlb_evict_vpn(TlbKind::Data, p.vpn());
  CHECK(core.timed_access(p) == core.profile().lat_cache_hit + core.profile().lat_walk);
  CHECK(core.profile().lat_cache_hit + core.profile().lat_walk < core.profile().hit_threshold);
}

TEST_CASE("noise flips roughly noise_p of timing classifications") {
  MicroarchProfile profile = skylake_profile();
  profile.noise_p = 0.5;
  Rig rig = make_rig(profile);
  Core& core = rig.core();
  const VirtualAddress p = va(kUser).offset_by(7 * kPageSize);
  core.tlb_insert(TlbKind::Data, p.vpn(), core.space().translate(p).frame);

  const int trials = 10000;
  int misclassified = 0;
  for (int i = 0; i < trials; ++i) {
    core.flush_line(p);  // true state: uncached
    if (core.timed_access(p) < profile.hit_threshold) ++misclassified;
  }
  // Binomial(10^4, 0.5): mean 5000, sigma 50; accept within 3 sigma.
  const double sigma = std::sqrt(trials * 0.5 * 0.5);
  CHECK(std::abs(misclassified - trials * 0.5) <= 3.0 * sigma);
}

TEST_CASE("cycle counter never decreases") {
  Rig rig = make_rig();
  Core& core = rig.core();
  std::uint64_t last = core.cycles();
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    switch (rng.below(4)) {
      case 0: {
        const std::uint8_t x[1] = {1};
        if (core.store_buffer_size() < core.profile().store_buffer_capacity) {
          core.store_issue(va(kUser).offset_by(rng.below(64) * kPageSize), x);
        } else {
          core.drain_store_buffer();
        }
        break;
      }
      case 1:
        core.load_issue(va(kUser).offset_by(rng.below(64) * kPageSize), 1);
        break;
      case 2:
        core.timed_access(va(kUser).offset_by(rng.below(64) * kPageSize));
        break;
      default:
        with_window(core, Suppression::TsxLike, [&] {
          core.load_issue(va(kKernel).offset_by(rng.below(64) * kPageSize), 1);
        });
        break;
    }
    CHECK(core.cycles() >= last);
    last = core.cycles();
  }
}

TEST_CASE("profiles reject out-of-range fields") {
  MicroarchProfile p = skylake_profile();
  p.noise_p = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = skylake_profile();
  p.store_buffer_capacity = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = skylake_profile();
  p.lat_cache_miss = p.lat_cache_hit;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("built-in profiles differ in the documented switches") {
  const MicroarchProfile sky = skylake_profile();
  const MicroarchProfile p4 = pentium4_profile();
  CHECK(sky.wtf_enabled);
  CHECK(sky.store_buffer_capacity == 56);
  CHECK_FALSE(p4.wtf_enabled);
  CHECK(p4.store_buffer_capacity == 24);
}

TEST_CASE("profile JSON round-trips") {
  MicroarchProfile p = pentium4_profile();
  p.noise_p = 0.25;
  const MicroarchProfile q = profile_from_json_text(profile_to_json_text(p));
  CHECK(q.name == p.name);
  CHECK(q.store_buffer_capacity == p.store_buffer_capacity);
  CHECK(q.wtf_enabled == p.wtf_enabled);
  CHECK(q.noise_p == doctest::Approx(p.noise_p));
  CHECK(q.dtlb.sets == p.dtlb.sets);
  CHECK(q.itlb.ways == p.itlb.ways);
}
