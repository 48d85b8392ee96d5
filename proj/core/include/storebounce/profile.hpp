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

#ifndef STOREBOUNCE_PROFILE_HPP
#define STOREBOUNCE_PROFILE_HPP

#include <cstdint>
#include <string>

namespace storebounce {

struct TlbGeometry {
  std::uint32_t sets = 0;
  std::uint32_t ways = 0;
};

/// Per-CPU behavior switches. wtf_enabled controls false-positive forwarding
/// to faulting loads whose page offset overlaps a buffered store.
struct MicroarchProfile {
  std::string name = "skylake";
  std::uint32_t store_buffer_capacity = 56;
  bool wtf_enabled = true;
  TlbGeometry dtlb{16, 4};
  TlbGeometry itlb{8, 8};
  std::uint64_t lat_cache_hit = 40;
  std::uint64_t lat_cache_miss = 300;
  std::uint64_t lat_walk = 100;
  std::uint64_t hit_threshold = 150;  // timed accesses below this classify as cached
  std::uint64_t cache_capacity_lines = 4096;
  double noise_p = 0.0;               // probability a timing classification flips
  double mispredict_success_p = 1.0;  // probability a mispredicted branch runs transiently

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

MicroarchProfile skylake_profile();
MicroarchProfile pentium4_profile();

MicroarchProfile profile_from_json_text(const std::string& text);
std::string profile_to_json_text(const MicroarchProfile& profile);

/// Resolves a profile by built-in name, by path, or by file name under
/// $STOREBOUNCE_PROFILE_DIR. Throws ConfigError when nothing matches.
MicroarchProfile resolve_profile(const std::string& name_or_path);

}  // namespace storebounce

#endif
