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

#ifndef STOREBOUNCE_STOREBOUNCE_HPP
#define STOREBOUNCE_STOREBOUNCE_HPP

#include "storebounce/address.hpp"
#include "storebounce/attacks.hpp"
#include "storebounce/core.hpp"
#include "storebounce/errors.hpp"
#include "storebounce/layout.hpp"
#include "storebounce/metrics.hpp"
#include "storebounce/primitives.hpp"
#include "storebounce/profile.hpp"
#include "storebounce/rng.hpp"
#include "storebounce/scenario.hpp"
#include "storebounce/transient.hpp"

#endif
