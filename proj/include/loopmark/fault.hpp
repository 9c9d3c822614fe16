/*
 * Copyright 2026 The Loopmark Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// Crash injection for recovery tests. When LOOPMARK_FAULT is "<point>" or
// "<point>#<n>", the process exits abruptly (no destructors, no flush) the
// first (or n-th) time execution reaches `fault_point(<point>)`.

#ifndef LOOPMARK_FAULT_HPP_
#define LOOPMARK_FAULT_HPP_

#include <string_view>

namespace loopmark {

inline constexpr int kFaultExitCode = 86;

void fault_point(std::string_view point);

}  // namespace loopmark

#endif  // LOOPMARK_FAULT_HPP_
