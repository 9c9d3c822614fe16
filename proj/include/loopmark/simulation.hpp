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


// Desk-scale stand-ins for the detector and the annotator.
//
// The mock detector degrades ground truth with noise that shrinks as the
// training set grows: every error parameter is multiplied by
// s(n) = sqrt(n0 / n) (rates are capped at their base values). Random draws
// are keyed by (seed, image id, box index) only, so the same image sees the
// same underlying draws at every training size.

#ifndef LOOPMARK_SIMULATION_HPP_
#define LOOPMARK_SIMULATION_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopmark/detector.hpp"
#include "loopmark/labelfmt.hpp"
#include "loopmark/workspace.hpp"

namespace loopmark {

struct MockDetectorModel {
  double center_jitter = 0.04;   // std-dev of centre offset, in box sizes
  double size_jitter = 0.06;     // std-dev of relative size change
  double miss_rate = 0.15;
  double spurious_rate = 0.20;   // expected spurious boxes per true box
  int reference_size = 100;      // n0
  std::uint64_t seed = 0;
  /// Perturbation magnitude at which confidence reaches its floor.
  double confidence_scale = 0.5;

  void validate() const;
};

/// Effective parameters after training on n originals.
struct MockWeights {
  int train_size = 0;
  double center_jitter = 0.0;
  double size_jitter = 0.0;
  double miss_rate = 0.0;
  double spurious_rate = 0.0;
  double confidence_scale = 0.5;
  std::uint64_t seed = 0;

  friend bool operator==(const MockWeights&, const MockWeights&) = default;
};

/// Throws InvalidArgument for n < 1.
MockWeights mock_train(const MockDetectorModel& model, int train_size);
std::string mock_weights_to_json(const MockWeights& w);
MockWeights mock_weights_from_json(std::string_view text);

std::vector<Prediction> mock_detect(const MockWeights& w,
                                    std::string_view image_id,
                                    std::span<const BoundingBox> truth,
                                    int num_classes);

struct AnnotatorCostModel {
  double cost_review = 0.1;
  double cost_adjust = 1.0;
  double cost_reclass = 0.5;
  double cost_delete = 0.5;
  double cost_draw = 3.0;
  double accept_iou = 0.95;
  double match_iou = 0.5;

  void validate() const;
};

struct ReviewOutcome {
  std::vector<BoundingBox> corrected;  // always the ground truth
  LaborSummary labor;                  // one image
};

/// Corrects `predictions` to `truth`, pricing each edit.
ReviewOutcome simulate_review(std::span<const Prediction> predictions,
                              std::span<const BoundingBox> truth,
                              const AnnotatorCostModel& costs);

/// Labor of drawing every box of `truth` from scratch.
LaborSummary manual_labor(std::span<const BoundingBox> truth,
                          const AnnotatorCostModel& costs);

// ---------------------------------------------------------------------------
// Scenarios
//
//   <dir>/scenario.json, classes.txt
//   <dir>/seed/{images,labels}/   manually labeled seed set
//   <dir>/pool/images/            unlabeled loop images
//   <dir>/val/{images,labels}/
//   <dir>/simulation/ground_truth/<name>.txt   hidden labels for every image
//   <dir>/simulation/index.json               content id -> name

struct ScenarioSpec {
  int seed_images = 100;
  int pool_images = 300;
  int val_images = 100;
  int width = 96;
  int height = 96;
  int min_boxes = 1;
  int max_boxes = 4;
  std::uint64_t seed = 1;
  std::vector<std::string> classes{"ballast", "plant"};

  void validate() const;
};

void generate_scenario(const std::filesystem::path& dir, const ScenarioSpec& spec);
ScenarioSpec read_scenario_spec(const std::filesystem::path& dir);

/// Hidden labels of a scenario, looked up by workspace image id.
class GroundTruth {
 public:
  /// `dir` is a scenario directory (or its simulation/ subdirectory).
  static GroundTruth load(const std::filesystem::path& dir);

  /// Labels for an image id; ids of augmented copies are not present.
  const std::vector<BoundingBox>* find(const std::string& image_id) const;
  const std::vector<BoundingBox>& at(const std::string& image_id) const;
  std::size_t size() const { return labels_.size(); }

 private:
  std::map<std::string, std::vector<BoundingBox>> labels_;
};

/// In-process mock detector satisfying the adapter contract: training
/// counts the original (non-augmented) images in the dataset and writes
/// MockWeights as JSON; detection reads hidden labels from a scenario.
class MockDetector : public Detector {
 public:
  MockDetector(MockDetectorModel model, std::filesystem::path scenario_dir);

  std::filesystem::path train(const TrainRequest& req) override;
  int detect(const DetectRequest& req) override;

 private:
  MockDetectorModel model_;
  std::filesystem::path scenario_dir_;
  std::optional<GroundTruth> truth_;
  int num_classes_ = 0;
};

/// Number of dataset images that are not augmented copies.
int count_original_images(const std::filesystem::path& images_dir);

}  // namespace loopmark

#endif  // LOOPMARK_SIMULATION_HPP_
