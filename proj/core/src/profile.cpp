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

#include "storebounce/profile.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "storebounce/errors.hpp"

namespace storebounce {

void MicroarchProfile::validate() const {
  if (store_buffer_capacity < 1) throw ConfigError("profile: store_buffer_capacity must be >= 1");
  if (lat_cache_miss <= lat_cache_hit) {
    throw ConfigError("profile: lat_cache_miss must exceed lat_cache_hit");
  }
  if (noise_p < 0.0 || noise_p >= 1.0) throw ConfigError("profile: noise_p must be in [0,1)");
  if (mispredict_success_p < 0.0 || mispredict_success_p > 1.0) {
    throw ConfigError("profile: mispredict_success_p must be in [0,1]");
  }
  if (dtlb.sets == 0 || dtlb.ways == 0 || itlb.sets == 0 || itlb.ways == 0) {
    throw ConfigError("profile: TLB geometry must be nonzero");
  }
  if (cache_capacity_lines == 0) throw ConfigError("profile: cache_capacity_lines must be >= 1");
}

MicroarchProfile skylake_profile() {
  MicroarchProfile p;
  p.name = "skylake";
  p.wtf_enabled = true;
  p.store_buffer_capacity = 56;
  return p;
}

MicroarchProfile pentium4_profile() {
  MicroarchProfile p;
  p.name = "pentium4";
  p.wtf_enabled = false;
  p.store_buffer_capacity = 24;
  return p;
}

namespace {

nlohmann::json geometry_to_json(const TlbGeometry& g) {
  return {{"sets", g.sets}, {"ways", g.ways}};
}

TlbGeometry geometry_from_json(const nlohmann::json& j) {
  return {j.at("sets").get<std::uint32_t>(), j.at("ways").get<std::uint32_t>()};
}

}  // namespace

MicroarchProfile profile_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("profile: invalid JSON: ") + e.what());
  }
  MicroarchProfile p;
  try {
    p.name = j.at("name").get<std::string>();
    p.store_buffer_capacity = j.at("store_buffer_capacity").get<std::uint32_t>();
    p.wtf_enabled = j.at("wtf_enabled").get<bool>();
    p.dtlb = geometry_from_json(j.at("dtlb_geometry"));
    p.itlb = geometry_from_json(j.at("itlb_geometry"));
    p.lat_cache_hit = j.at("lat_cache_hit").get<std::uint64_t>();
    p.lat_cache_miss = j.at("lat_cache_miss").get<std::uint64_t>();
    p.lat_walk = j.at("lat_walk").get<std::uint64_t>();
    p.noise_p = j.at("noise_p").get<double>();
    // Optional knobs keep older profile files loadable.
    p.hit_threshold = j.value("hit_threshold", p.hit_threshold);
    p.cache_capacity_lines = j.value("cache_capacity_lines", p.cache_capacity_lines);
    p.mispredict_success_p = j.value("mispredict_success_p", p.mispredict_success_p);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("profile: missing or mistyped field: ") + e.what());
  }
  p.validate();
  return p;
}

std::string profile_to_json_text(const MicroarchProfile& p) {
  nlohmann::json j;
  j["name"] = p.name;
  j["store_buffer_capacity"] = p.store_buffer_capacity;
  j["wtf_enabled"] = p.wtf_enabled;
  j["dtlb_geometry"] = geometry_to_json(p.dtlb);
  j["itlb_geometry"] = geometry_to_json(p.itlb);
  j["lat_cache_hit"] = p.lat_cache_hit;
  j["lat_cache_miss"] = p.lat_cache_miss;
  j["lat_walk"] = p.lat_walk;
  j["hit_threshold"] = p.hit_threshold;
  j["cache_capacity_lines"] = p.cache_capacity_lines;
  j["noise_p"] = p.noise_p;
  j["mispredict_success_p"] = p.mispredict_success_p;
  return j.dump(2);
}

namespace {

MicroarchProfile profile_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("profile: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return profile_from_json_text(buf.str());
}

}  // namespace

MicroarchProfile resolve_profile(const std::string& name_or_path) {
  if (name_or_path == "skylake") return skylake_profile();
  if (name_or_path == "pentium4") return pentium4_profile();

  namespace fs = std::filesystem;
  if (fs::exists(name_or_path)) return profile_from_file(name_or_path);

  if (const char* dir = std::getenv("STOREBOUNCE_PROFILE_DIR")) {
    for (const std::string candidate : {name_or_path, name_or_path + ".json"}) {
      const fs::path p = fs::path(dir) / candidate;
      if (fs::exists(p)) return profile_from_file(p);
    }
  }
  throw ConfigError("profile: unknown profile '" + name_or_path + "'");
}

}  // namespace storebounce
