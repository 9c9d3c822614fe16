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


#include "loopmark/fault.hpp"

#include <cstdlib>
#include <map>
#include <mutex>
#include <string>

namespace loopmark {

void fault_point(std::string_view point) {
  static const std::string spec = [] {
    const char* env = std::getenv("LOOPMARK_FAULT");
    return std::string(env ? env : "");
  }();
  if (spec.empty()) return;
  std::string_view name = spec;
  long target = 1;
  if (auto hash = name.find('#'); hash != std::string_view::npos) {
    target = std::strtol(spec.c_str() + hash + 1, nullptr, 10);
    name = name.substr(0, hash);
  }
  if (name != point) return;
  static std::mutex mu;
  static long hits = 0;
  std::lock_guard<std::mutex> guard(mu);
  if (++hits == target) std::_Exit(kFaultExitCode);
}

}  // namespace loopmark
