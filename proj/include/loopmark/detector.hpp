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


// Process-and-files contract between the loop and a detector.
//
// Training receives a dataset directory in the usual YOLO layout
// (images/, labels/, classes.txt, data.yaml) and must leave a weights file at
// {weights_out}. Detection receives {weights_in}, an {images_dir} of PNGs and
// must write one prediction file per image into {predictions_dir}.

#ifndef LOOPMARK_DETECTOR_HPP_
#define LOOPMARK_DETECTOR_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "loopmark/labelfmt.hpp"

namespace loopmark {

struct AdapterConfig {
  std::string train_command;
  std::string detect_command;
  double timeout_s = 3600.0;
  std::string workdir;  // empty: inherit
  double heartbeat_s = 10.0;

  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const;
};

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string output;  // stdout and stderr interleaved, tail-truncated
  double seconds = 0.0;
};

/// Runs `command` under /bin/sh in its own process group. On timeout the
/// whole group is killed. `extra_env` entries override the inherited
/// environment. Progress is logged every `heartbeat_s` seconds.
ProcessResult run_process(const std::string& command, double timeout_s,
                          const std::filesystem::path& workdir = {},
                          const std::vector<std::pair<std::string, std::string>>&
                              extra_env = {},
                          double heartbeat_s = 10.0);

/// Replaces each {name} with the single-quoted value. Unknown placeholders
/// throw InvalidArgument.
std::string substitute_placeholders(
    std::string_view templ, const std::map<std::string, std::string>& values);

/// Writes the dataset handoff metadata (data.yaml) and classes.txt.
void write_dataset_metadata(const std::filesystem::path& dataset_dir,
                            const LabelMap& label_map);

/// Returns the weights path. Throws TrainFailed, AdapterTimeout or
/// MissingWeights, each carrying the captured output.
std::filesystem::path run_train(const AdapterConfig& cfg,
                                const std::filesystem::path& dataset_dir,
                                const std::filesystem::path& weights_out,
                                const std::optional<std::filesystem::path>& weights_in,
                                int iteration);

/// Returns the number of prediction files. Throws MissingWeights,
/// DetectFailed or AdapterTimeout.
int run_detect(const AdapterConfig& cfg, const std::filesystem::path& weights,
               const std::filesystem::path& images_dir,
               const std::filesystem::path& predictions_dir, int iteration);

/// Checks that every PNG in `images_dir` has a parseable prediction file.
/// Throws DetectFailed naming the file (and line) at fault.
int validate_predictions(const std::filesystem::path& images_dir,
                         const std::filesystem::path& predictions_dir,
                         const LabelMap* label_map = nullptr);

struct TrainRequest {
  std::filesystem::path dataset_dir;
  std::filesystem::path weights_out;
  std::optional<std::filesystem::path> weights_in;
  int iteration = 0;
};

struct DetectRequest {
  std::filesystem::path weights;
  std::filesystem::path images_dir;
  std::filesystem::path predictions_dir;
  int iteration = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::filesystem::path train(const TrainRequest& req) = 0;
  virtual int detect(const DetectRequest& req) = 0;
};

class CommandDetector : public Detector {
 public:
  explicit CommandDetector(AdapterConfig cfg);
  std::filesystem::path train(const TrainRequest& req) override;
  int detect(const DetectRequest& req) override;

 private:
  AdapterConfig cfg_;
};

}  // namespace loopmark

#endif  // LOOPMARK_DETECTOR_HPP_
