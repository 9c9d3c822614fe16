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


// HTTP API over a workspace whose loop is waiting for review.
//
//   GET  /api/session
//   GET  /api/items
//   GET  /api/items/{id}/image          PNG bytes
//   GET  /api/items/{id}/predictions
//   GET  /api/labelmap
//   PUT  /api/items/{id}/labels         {"boxes": [...]}, full replacement
//   POST /api/items/{id}/accept
//   POST /api/finalize
//
// Errors are {"error": "..."} with 400 (bad JSON), 404 (unknown image),
// 409 (wrong phase, illegal status change, pending items) or 422 (invalid
// box). Reads go against the last committed manifest; writes are serialized.

#ifndef LOOPMARK_REVIEW_SERVICE_HPP_
#define LOOPMARK_REVIEW_SERVICE_HPP_

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "loopmark/simulation.hpp"

namespace loopmark {

class ReviewService {
 public:
  ReviewService(std::filesystem::path workspace_root, AnnotatorCostModel costs = {},
                std::string fixed_clock = {});
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  /// Hosts a built UI bundle at "/".
  void set_static_dir(const std::filesystem::path& dir);

  /// Blocks serving until stop().
  void listen(const std::string& host, int port);
  /// Serves on a background thread; returns the bound port (port 0 picks a
  /// free one).
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace loopmark

#endif  // LOOPMARK_REVIEW_SERVICE_HPP_
