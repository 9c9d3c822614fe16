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

// Detection evaluation: greedy confidence-ordered matching, all-point
// interpolated AP, mAP as the plain mean of per-class AP, F1 as the harmonic
// mean of precision and recall, and F1-vs-confidence sweeps.

#ifndef LOOPMARK_METRICS_HPP_
#define LOOPMARK_METRICS_HPP_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "loopmark/labelfmt.hpp"

namespace loopmark {

struct MatchConfig {
  double iou_threshold = 0.5;
  /// When set, predictions may match ground truth of any class.
  bool class_agnostic = false;

  void validate() const;
};

struct MatchResult {
  /// Indexed like the input predictions.
  std::vector<bool> is_tp;
  /// Ground-truth index matched by each prediction, -1 for false positives.
  std::vector<int> matched_truth;
  int unmatched_truths = 0;

  int true_positives() const;
  int false_positives() const;
};

/// Predictions are visited by descending confidence, ties by input order.
/// Each takes the not-yet-matched ground truth of the same class with the
/// highest IoU (lowest index on ties) and is a TP iff that IoU reaches the
/// threshold. A ground truth is matched at most once.
MatchResult match_detections(std::span<const Prediction> predictions,
                             std::span<const BoundingBox> truths,
                             const MatchConfig& cfg);

struct ScoredDetection {
  double confidence = 0.0;
  bool true_positive = false;
};

struct PRPoint {
  double confidence = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// One point per detection, ordered by descending confidence.
struct PRCurve {
  std::vector<PRPoint> points;
  int total_truths = 0;
};

/// Sorts by descending confidence (stable) and accumulates precision/recall.
PRCurve build_pr_curve(std::vector<ScoredDetection> detections,
                       int total_truths);

/// Area under the monotone precision envelope. Zero for an empty curve or
/// when there is no ground truth.
double average_precision(const PRCurve& curve);

/// Arithmetic mean of per-class AP. Throws InvalidArgument when empty.
double mean_average_precision(const std::map<int, double>& per_class_ap);

/// 2PR / (P + R), zero when P + R = 0.
double f1(double precision, double recall);

struct ImageEval {
  std::vector<Prediction> predictions;
  std::vector<BoundingBox> truths;
};

struct F1Point {
  double cutoff = 0.0;
  double precision = 0.0;  // mean over evaluated classes
  double recall = 0.0;     // mean over evaluated classes
  double f1 = 0.0;         // mean of per-class F1
};

struct F1Sweep {
  std::vector<F1Point> curve;
  double best_f1 = 0.0;
  double best_f1_confidence = 0.0;
};

/// {0.00, 0.01, ..., 1.00}.
std::vector<double> default_confidence_grid();

/// For each cutoff keeps predictions with confidence >= cutoff and averages
/// per-class F1 over classes that have ground truth. Ties for the best value
/// resolve to the lowest cutoff. Throws InvalidArgument on an empty or
/// unsorted grid.
F1Sweep f1_confidence_sweep(std::span<const ImageEval> images,
                            const MatchConfig& cfg,
                            std::span<const double> grid);

struct EvalOptions {
  std::vector<double> iou_thresholds{0.5, 0.9};
  /// IoU threshold used for the F1 sweep.
  double f1_iou_threshold = 0.5;
  bool class_agnostic = false;
  std::vector<double> confidence_grid = default_confidence_grid();
};

struct EvalReport {
  std::vector<double> iou_thresholds;
  /// Classes with ground truth present; N in the mAP mean.
  std::vector<int> classes;
  /// class -> AP at each threshold (aligned with iou_thresholds).
  std::map<int, std::vector<double>> per_class_ap;
  /// Mean AP at each threshold.
  std::vector<double> map_by_threshold;
  double map_50 = 0.0;
  double map_90 = 0.0;
  std::vector<F1Point> f1_curve;
  double best_f1 = 0.0;
  double best_f1_confidence = 0.0;
  /// Per-class PR curves at the F1 IoU threshold, for plotting.
  std::map<int, PRCurve> pr_curves;
  int images = 0;
  int truths = 0;
  int predictions = 0;
};

EvalReport evaluate(std::span<const ImageEval> images,
                    const EvalOptions& options = {});

/// Stable-key-order JSON document.
std::string eval_report_json(const EvalReport& report);
/// Fixed-width text table; class names come from `map` when it knows them.
std::string eval_summary_table(const EvalReport& report, const LabelMap& map);
/// `cutoff,precision,recall,f1` lines with a header.
std::string f1_curve_csv(std::span<const F1Point> curve);
std::string pr_curve_csv(const PRCurve& curve);

}  // namespace loopmark

#endif  // LOOPMARK_METRICS_HPP_
