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

#include <benchmark/benchmark.h>

#include "storebounce/scenario.hpp"
#include "storebounce/storebounce.hpp"

using namespace storebounce;

namespace {

ScenarioWorld bench_world(std::uint64_t seed = 1) {
  return make_world(skylake_profile(), seed, OsProfile::Linux, default_module_table());
}

void BM_DataBounceResident(benchmark::State& state) {
  ScenarioWorld world = bench_world();
  Core& core = world.machine.core();
  const VirtualAddress p = world.layout.kernel_base;
  for (auto _ : state) {
    benchmark::DoNotOptimize(data_bounce(core, p, 0x42, world.probe).bounced);
  }
}
BENCHMARK(BM_DataBounceResident);

void BM_DataBounceUnmapped(benchmark::State& state) {
  ScenarioWorld world = bench_world();
  Core& core = world.machine.core();
  const VirtualAddress p = va(0x00007f9000000000ull);
  for (auto _ : state) {
    benchmark::DoNotOptimize(data_bounce(core, p, 0x42, world.probe).bounced);
  }
}
BENCHMARK(BM_DataBounceUnmapped);

void BM_BounceTestUnmapped(benchmark::State& state) {
  ScenarioWorld world = bench_world();
  Core& core = world.machine.core();
  const VirtualAddress p = va(0x00007f9000000000ull);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bounce_test(core, p, 0x42, world.probe));
  }
}
BENCHMARK(BM_BounceTestUnmapped);

void BM_FetchBounceMiss(benchmark::State& state) {
  ScenarioWorld world = bench_world();
  Core& core = world.machine.core();
  const VirtualAddress p = world.layout.kernel_base;
  for (auto _ : state) {
    core.tlb_evict_vpn(TlbKind::Data, p.vpn());
    benchmark::DoNotOptimize(fetch_bounce(core, p, 0x42, world.probe).retry);
  }
}
BENCHMARK(BM_FetchBounceMiss);

void BM_TimedAccessHit(benchmark::State& state) {
  ScenarioWorld world = bench_world();
  Core& core = world.machine.core();
  const VirtualAddress p = world.probe.page(7);
  core.timed_access(p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(core.timed_access(p));
  }
}
BENCHMARK(BM_TimedAccessHit);

void BM_BreakKaslrLinux(benchmark::State& state) {
  for (auto _ : state) {
    state.PauseTiming();
    ScenarioWorld world = bench_world(state.iterations());
    state.ResumeTiming();
    benchmark::DoNotOptimize(
        break_kaslr(world.machine.core(), OsProfile::Linux, world.probe).candidates_tested);
  }
}
BENCHMARK(BM_BreakKaslrLinux)->Unit(benchmark::kMillisecond);

void BM_SpectreLeakByte(benchmark::State& state) {
  ScenarioWorld world = bench_world();
  AddressSpace& space = *world.machine.space;
  const VirtualAddress data_base = world.layout.direct_map_base.offset_by(64 * kPageSize);
  const VirtualAddress oracle_base = world.layout.direct_map_base.offset_by(128 * kPageSize);
  const PageFlags kernel{.present = true, .user_accessible = false, .writable = true,
                         .protected_region = false};
  space.map_region(data_base, 2, kernel);
  space.map_region(oracle_base, 256, kernel);
  const SpectreGadget gadget{1, data_base, 16, oracle_base};
  BranchPredictor pred;
  Core& core = world.machine.core();
  const TranslateResult tr = space.translate(data_base.offset_by(16));
  world.machine.memory->write_byte(tr.frame, 16, 0x53);

  for (auto _ : state) {
    benchmark::DoNotOptimize(
        speculative_fetch_bounce(core, pred, gadget, 16, oracle_base, 0x42, world.probe));
  }
}
BENCHMARK(BM_SpectreLeakByte)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
