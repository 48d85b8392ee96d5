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

#ifndef STOREBOUNCE_TRANSIENT_HPP
#define STOREBOUNCE_TRANSIENT_HPP

#include <cstdint>
#include <unordered_map>
#include <utility>

#include "storebounce/core.hpp"

namespace storebounce {

/// Runs body with faults suppressed. Architectural writes made inside are
/// squashed on close; TLB and cache fills persist. Windows do not nest.
template <typename Body>
auto with_window(Core& core, Suppression suppression, Body&& body) {
  struct CloseGuard {
    Core& core;
    ~CloseGuard() { core.end_window(); }
  };
  core.begin_window(suppression);
  CloseGuard guard{core};
  return body();
}

/// Per-site 2-bit saturating counters; predicts taken when counter >= 2.
class BranchPredictor {
public:
  bool predict(std::uint64_t site) const {
    auto it = counters_.find(site);
    return it != counters_.end() && it->second >= 2;
  }

  void train(std::uint64_t site, bool taken) {
    std::uint8_t& c = counters_[site];
    if (taken) {
      if (c < 3) ++c;
    } else {
      if (c > 0) --c;
    }
  }

  std::uint8_t counter(std::uint64_t site) const {
    auto it = counters_.find(site);
    return it == counters_.end() ? 0 : it->second;
  }

private:
  std::unordered_map<std::uint64_t, std::uint8_t> counters_;
};

/// Conditional-branch speculation around body (the taken path).
///
/// actual=true runs body architecturally. A taken prediction against
/// actual=false runs body transiently inside an implicit window, subject to
/// the profile's mispredict_success_p. The counter then trains toward
/// actual. Returns whether a transient run happened.
template <typename Body>
bool speculate(Core& core, BranchPredictor& pred, std::uint64_t site, bool actual,
               Body&& body) {
  const bool predicted = pred.predict(site);
  bool ran_transient = false;
  if (predicted && !actual &&
      core.rng().chance(core.profile().mispredict_success_p)) {
    with_window(core, Suppression::TsxLike, body);
    ran_transient = true;
  }
  if (actual) {
    body();
  }
  pred.train(site, actual);
  return ran_transient;
}

inline Transaction tx_begin(Core& core) { return core.tx_begin(); }
inline void tx_commit(Core& core, Transaction& tx) { core.tx_commit(tx); }
inline void tx_abort(Core& core, Transaction& tx) { core.tx_abort(tx); }

}  // namespace storebounce

#endif
