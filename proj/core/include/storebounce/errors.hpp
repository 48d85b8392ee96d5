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

#ifndef STOREBOUNCE_ERRORS_HPP
#define STOREBOUNCE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace storebounce {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Store buffer has no free slot; the frontend would stall.
struct StallError : SimError {
  StallError() : SimError("store buffer full: frontend stalls") {}
};

// A faulting access was performed outside any transient window.
struct ArchitecturalFault : SimError {
  explicit ArchitecturalFault(const std::string& what) : SimError(what) {}
};

struct TxStateError : SimError {
  explicit TxStateError(const std::string& what) : SimError(what) {}
};

struct ModuleRegionOverflow : SimError {
  ModuleRegionOverflow() : SimError("module table does not fit in the module region") {}
};

// A search scan found no positive candidate.
struct NotFoundError : SimError {
  explicit NotFoundError(const std::string& what) : SimError(what) {}
};

// Transient TLB probe saw no hit (e.g. misspeculation did not occur).
struct NoHitError : SimError {
  NoHitError() : SimError("no TLB-hit candidate") {}
};

// More than one candidate hit; set-collision noise.
struct AmbiguousHitError : SimError {
  AmbiguousHitError() : SimError("multiple TLB-hit candidates") {}
};

struct ConfigError : SimError {
  explicit ConfigError(const std::string& what) : SimError(what) {}
};

}  // namespace storebounce

#endif
