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

// Generators and fixtures shared by the test binaries.

#ifndef LOOPMARK_TESTS_TEST_SUPPORT_HPP_
#define LOOPMARK_TESTS_TEST_SUPPORT_HPP_

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>

#include "loopmark/labelfmt.hpp"
#include "loopmark/rng.hpp"

namespace loopmark::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("loopmark_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const {
    return path_ / s;
  }

 private:
  std::filesystem::path path_;
};

/// Valid box whose fields sit on the six-decimal grid, so serialization is
/// lossless.
inline BoundingBox RandomGridBox(Rng& rng, int num_classes) {
  auto grid = [](double v) { return std::round(v * 1e6) / 1e6; };
  BoundingBox b;
  b.class_id = rng.uniform_int(0, num_classes - 1);
  b.w = grid(rng.uniform(0.001, 0.9));
  b.h = grid(rng.uniform(0.001, 0.9));
  b.cx = grid(rng.uniform(b.w / 2, 1.0 - b.w / 2));
  b.cy = grid(rng.uniform(b.h / 2, 1.0 - b.h / 2));
  // Grid rounding can push an edge out by half a micro-unit; pull it back.
  b.cx = std::clamp(b.cx, b.w / 2, 1.0 - b.w / 2);
  b.cy = std::clamp(b.cy, b.h / 2, 1.0 - b.h / 2);
  return b;
}

/// Continuous-valued valid box with centre and size drawn freely.
inline BoundingBox RandomBox(Rng& rng, int num_classes, double min_size = 0.02,
                             double max_size = 0.6) {
  BoundingBox b;
  b.class_id = rng.uniform_int(0, num_classes - 1);
  b.w = rng.uniform(min_size, max_size);
  b.h = rng.uniform(min_size, max_size);
  b.cx = rng.uniform(b.w / 2, 1.0 - b.w / 2);
  b.cy = rng.uniform(b.h / 2, 1.0 - b.h / 2);
  return b;
}

}  // namespace loopmark::testing

#endif  // LOOPMARK_TESTS_TEST_SUPPORT_HPP_
