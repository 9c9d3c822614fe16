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


// The annotation loop as a resumable state machine.
//
//   Seeded -> Augmented -> Trained -> Detected -> AwaitingReview -> Merged
//          -> Evaluated -> Augmented (next iteration) -> ...
//
// Each call to Orchestrator::step advances exactly one phase. A transition
// is bracketed by "begin" and "commit" lines in journal.log; its file effects
// and the new phase are committed together through one workspace
// transaction, so a crash at any point leaves the previous phase intact and
// the next step simply redoes the transition. All side effects are written to
// per-iteration paths and are deterministic, which makes the redo idempotent.

#ifndef LOOPMARK_ORCHESTRATOR_HPP_
#define LOOPMARK_ORCHESTRATOR_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopmark/detector.hpp"
#include "loopmark/geometry.hpp"
#include "loopmark/review.hpp"
#include "loopmark/simulation.hpp"
#include "loopmark/workspace.hpp"

namespace loopmark {

struct DetectorConfig {
  std::string kind = "mock";  // "mock" or "command"
  AdapterConfig command;
  MockDetectorModel mock;
  /// Scenario directory holding the hidden labels the mock detects from.
  std::string scenario_dir;
};

struct SimulatedReviewConfig {
  /// Scenario directory whose hidden labels the simulated annotator uses.
  std::string scenario_dir;
};

struct LoopConfig {
  int batch_size = 100;
  /// 0 runs until the unlabeled pool is exhausted.
  int max_iterations = 0;
  AugmentationSpec augmentation;
  DetectorConfig detector;
  std::optional<double> auto_accept_confidence;
  std::vector<double> eval_thresholds{0.5, 0.9};
  double f1_iou_threshold = 0.5;
  /// Pass the previous iteration's weights as {weights_in}. Off: every
  /// iteration trains from scratch.
  bool finetune = false;
  AnnotatorCostModel costs;
  std::optional<SimulatedReviewConfig> simulated_review;
  /// When non-empty every recorded timestamp takes this value.
  std::string fixed_clock;

  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const;
  /// Sets the augmentation and mock seeds.
  void apply_seed(std::uint64_t seed);
};

/// Missing keys keep their defaults; unknown keys are rejected. Throws
/// UserError on malformed input.
LoopConfig loop_config_from_json(std::string_view text);
std::string loop_config_to_json(const LoopConfig& cfg);
LoopConfig read_loop_config(const std::filesystem::path& path);
AugmentationSpec augmentation_spec_from_json(std::string_view text);

std::unique_ptr<Detector> make_detector(const LoopConfig& cfg);

enum class StepStatus { kAdvanced, kReviewPending, kComplete };

struct StepResult {
  StepStatus status = StepStatus::kAdvanced;
  Phase phase = Phase::kEmpty;
  int iteration = 0;
  std::string message;
};

class Orchestrator {
 public:
  /// Uses make_detector(cfg) when `detector` is null.
  Orchestrator(Workspace& ws, LoopConfig cfg,
               std::unique_ptr<Detector> detector = nullptr);

  /// Imports (or adopts already imported) images as the manually labeled
  /// seed set. Every image needs a label file in `labels_dir`.
  LoopState seed(std::span<const std::filesystem::path> images,
                 const std::filesystem::path& labels_dir,
                 const std::string& tag = {});

  StepResult step();
  /// Steps until `cycles` more iterations are evaluated, the loop completes
  /// or the review gate is reached.
  std::vector<StepResult> run(int cycles);

  /// Writes the review bundle of the current iteration and moves Detected to
  /// AwaitingReview.
  ExportResult export_for_review();

  /// Merges `corrected` (one entry per pending image) and advances to
  /// Merged. Labor is priced from the exported predictions when not given.
  void finalize_review(
      const std::map<std::string, std::vector<BoundingBox>>& corrected,
      std::optional<LaborSummary> labor = std::nullopt);
  /// Finalizes from the review bundle (staged corrections, else the label
  /// files as edited on disk).
  void merge_from_bundle();

  const LoopConfig& config() const { return cfg_; }
  std::string now() const;

 private:
  template <typename Body>
  void Transition(Phase from, Phase to, int iteration, Body&& body);
  void Journal(const std::string& event, Phase from, Phase to, int iteration,
               const std::string& detail = {});
  StepResult Augment();
  StepResult Train();
  StepResult Detect();
  StepResult Export();
  StepResult Review();
  StepResult Evaluate();
  std::filesystem::path IterDir(const char* base, int iteration) const;

  Workspace& ws_;
  LoopConfig cfg_;
  std::unique_ptr<Detector> detector_;
  std::optional<GroundTruth> review_truth_;
};

/// `iteration,tag,train_size_original,...` rows, one per IterationRecord.
std::string report_csv(const Manifest& m);
/// Human-readable table, or "no iterations" when there are none.
std::string report_table(const Manifest& m);

struct SimulationOptions {
  std::filesystem::path scenario_dir;
  std::filesystem::path out_dir;
  int seeds = 5;
  bool baseline = true;
  LoopConfig config;
};

struct SimulationResult {
  /// Records of seed k (1-based seeds, index k-1).
  std::vector<std::vector<IterationRecord>> per_seed;
  std::vector<IterationRecord> baseline;
  /// `iteration,train_size,best_f1,map50,map90,labor_total,labor_per_image`
  /// with per-iteration medians over seeds, then a baseline row.
  std::string summary_csv;
  std::string per_seed_csv;
};

/// Runs the whole loop on the scenario once per seed (plus an all-manual
/// baseline) with the mock detector and the simulated annotator.
SimulationResult run_simulation(const SimulationOptions& opts);

}  // namespace loopmark

#endif  // LOOPMARK_ORCHESTRATOR_HPP_
