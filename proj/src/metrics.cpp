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

#include "loopmark/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "json.hpp"
#include "loopmark/error.hpp"
#include "loopmark/geometry.hpp"

namespace loopmark {
namespace {

// Class key used for grouping; everything pools into one key when matching
// is class agnostic.
int ClassKey(int class_id, bool agnostic) { return agnostic ? 0 : class_id; }

std::vector<std::size_t> ConfidenceOrder(std::span<const Prediction> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].confidence > preds[b].confidence;
  });
  return order;
}

std::string Fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v + 0.0);
  return buf;
}

}  // namespace

void MatchConfig::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw InvalidArgument("iou_threshold must be in (0,1]");
  }
}

int MatchResult::true_positives() const {
  return static_cast<int>(std::count(is_tp.begin(), is_tp.end(), true));
}

int MatchResult::false_positives() const {
  return static_cast<int>(is_tp.size()) - true_positives();
}

MatchResult match_detections(std::span<const Prediction> predictions,
                             std::span<const BoundingBox> truths,
                             const MatchConfig& cfg) {
  cfg.validate();
  MatchResult result;
  result.is_tp.assign(predictions.size(), false);
  result.matched_truth.assign(predictions.size(), -1);
  std::vector<bool> taken(truths.size(), false);

  for (std::size_t pi : ConfidenceOrder(predictions)) {
    const Prediction& p = predictions[pi];
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t gi = 0; gi < truths.size(); ++gi) {
      if (taken[gi]) continue;
      if (!cfg.class_agnostic && truths[gi].class_id != p.box.class_id) {
        continue;
      }
      const double v = iou(p.box, truths[gi]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0 && best_iou >= cfg.iou_threshold) {
      taken[static_cast<std::size_t>(best)] = true;
      result.is_tp[pi] = true;
      result.matched_truth[pi] = best;
    }
  }
  result.unmatched_truths =
      static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return result;
}

PRCurve build_pr_curve(std::vector<ScoredDetection> detections,
                       int total_truths) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const ScoredDetection& a, const ScoredDetection& b) {
                     return a.confidence > b.confidence;
                   });
  PRCurve curve;
  curve.total_truths = total_truths;
  curve.points.reserve(detections.size());
  int tp = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].true_positive) ++tp;
    PRPoint pt;
    pt.confidence = detections[i].confidence;
    pt.precision = static_cast<double>(tp) / static_cast<double>(i + 1);
    pt.recall = total_truths > 0
                    ? static_cast<double>(tp) / static_cast<double>(total_truths)
                    : 0.0;
    curve.points.push_back(pt);
  }
  return curve;
}

double average_precision(const PRCurve& curve) {
  if (curve.total_truths <= 0 || curve.points.empty()) return 0.0;
  const auto& pts = curve.points;
  // Right-to-left running maximum gives the precision envelope.
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].recall > prev_recall) {
      ap += (pts[i].recall - prev_recall) * envelope[i];
      prev_recall = pts[i].recall;
    }
  }
  return std::clamp(ap, 0.0, 1.0);
}

double mean_average_precision(const std::map<int, double>& per_class_ap) {
  if (per_class_ap.empty()) {
    throw InvalidArgument("mean average precision needs at least one class");
  }
  double sum = 0.0;
  for (const auto& [cls, ap] : per_class_ap) sum += ap;
  return sum / static_cast<double>(per_class_ap.size());
}

double f1(double precision, double recall) {
  const double denom = precision + recall;
  if (denom <= 0.0) return 0.0;
  // The harmonic mean of equal values is that value; 2pp/(2p) can round.
  if (precision == recall) return precision;
  return 2.0 * precision * recall / denom;
}

std::vector<double> default_confidence_grid() {
  std::vector<double> grid(101);
  for (int i = 0; i <= 100; ++i) grid[static_cast<std::size_t>(i)] = i / 100.0;
  return grid;
}

namespace {

struct ClassDetections {
  std::vector<ScoredDetection> detections;
  int truths = 0;
};

// Matches every image once and groups the scored detections by class key.
std::map<int, ClassDetections> GroupByClass(std::span<const ImageEval> images,
                                            const MatchConfig& cfg) {
  std::map<int, ClassDetections> by_class;
  for (const auto& img : images) {
    const MatchResult m = match_detections(img.predictions, img.truths, cfg);
    for (const auto& t : img.truths) {
      ++by_class[ClassKey(t.class_id, cfg.class_agnostic)].truths;
    }
    for (std::size_t i = 0; i < img.predictions.size(); ++i) {
      const auto& p = img.predictions[i];
      by_class[ClassKey(p.box.class_id, cfg.class_agnostic)]
          .detections.push_back({p.confidence, m.is_tp[i]});
    }
  }
  return by_class;
}

}  // namespace

F1Sweep f1_confidence_sweep(std::span<const ImageEval> images,
                            const MatchConfig& cfg,
                            std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("empty confidence grid");
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw InvalidArgument("confidence grid must be sorted ascending");
  }
  const auto by_class = GroupByClass(images, cfg);

  // Greedy matching is prefix-consistent in confidence order, so the TP
  // flags of the full run are valid for every cutoff.
  struct Sorted {
    std::vector<double> conf_desc;
    std::vector<int> cum_tp;
    int truths = 0;
  };
  std::vector<Sorted> classes;
  for (const auto& [cls, cd] : by_class) {
    if (cd.truths == 0) continue;
    auto dets = cd.detections;
    std::stable_sort(dets.begin(), dets.end(),
                     [](const ScoredDetection& a, const ScoredDetection& b) {
                       return a.confidence > b.confidence;
                     });
    Sorted s;
    s.truths = cd.truths;
    int tp = 0;
    for (const auto& d : dets) {
      tp += d.true_positive ? 1 : 0;
      s.conf_desc.push_back(d.confidence);
      s.cum_tp.push_back(tp);
    }
    classes.push_back(std::move(s));
  }

  F1Sweep sweep;
  sweep.best_f1 = -1.0;
  for (double cutoff : grid) {
    F1Point pt;
    pt.cutoff = cutoff;
    if (!classes.empty()) {
      for (const auto& s : classes) {
        // Number of detections with confidence >= cutoff.
        const auto kept = static_cast<std::size_t>(
            std::partition_point(s.conf_desc.begin(), s.conf_desc.end(),
                                 [&](double c) { return c >= cutoff; }) -
            s.conf_desc.begin());
        const int tp = kept == 0 ? 0 : s.cum_tp[kept - 1];
        const double precision =
            kept == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(kept);
        const double recall = static_cast<double>(tp) / s.truths;
        pt.precision += precision;
        pt.recall += recall;
        pt.f1 += f1(precision, recall);
      }
      const double n = static_cast<double>(classes.size());
      pt.precision /= n;
      pt.recall /= n;
      pt.f1 /= n;
    }
    if (pt.f1 > sweep.best_f1) {
      sweep.best_f1 = pt.f1;
      sweep.best_f1_confidence = cutoff;
    }
    sweep.curve.push_back(pt);
  }
  return sweep;
}

EvalReport evaluate(std::span<const ImageEval> images,
                    const EvalOptions& options) {
  EvalReport report;
  report.iou_thresholds = options.iou_thresholds;
  report.images = static_cast<int>(images.size());
  for (const auto& img : images) {
    report.truths += static_cast<int>(img.truths.size());
    report.predictions += static_cast<int>(img.predictions.size());
  }

  std::set<int> gt_classes;
  for (const auto& img : images) {
    for (const auto& t : img.truths) {
      gt_classes.insert(ClassKey(t.class_id, options.class_agnostic));
    }
  }
  report.classes.assign(gt_classes.begin(), gt_classes.end());

  for (double thr : options.iou_thresholds) {
    MatchConfig cfg{thr, options.class_agnostic};
    const auto by_class = GroupByClass(images, cfg);
    std::map<int, double> aps;
    for (int cls : report.classes) {
      const auto it = by_class.find(cls);
      const ClassDetections& cd = it->second;
      PRCurve curve = build_pr_curve(cd.detections, cd.truths);
      aps[cls] = average_precision(curve);
      if (thr == options.f1_iou_threshold) report.pr_curves[cls] = std::move(curve);
    }
    for (const auto& [cls, ap] : aps) report.per_class_ap[cls].push_back(ap);
    const double m = aps.empty() ? 0.0 : mean_average_precision(aps);
    report.map_by_threshold.push_back(m);
    if (thr == 0.5) report.map_50 = m;
    if (thr == 0.9) report.map_90 = m;
  }

  const F1Sweep sweep =
      f1_confidence_sweep(images, MatchConfig{options.f1_iou_threshold,
                                              options.class_agnostic},
                          options.confidence_grid);
  report.f1_curve = sweep.curve;
  report.best_f1 = std::max(sweep.best_f1, 0.0);
  report.best_f1_confidence = sweep.best_f1_confidence;
  return report;
}

std::string eval_report_json(const EvalReport& r) {
  nlohmann::json j;
  j["images"] = r.images;
  j["truths"] = r.truths;
  j["predictions"] = r.predictions;
  j["iou_thresholds"] = r.iou_thresholds;
  j["classes"] = r.classes;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, aps] : r.per_class_ap) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t i = 0; i < aps.size() && i < r.iou_thresholds.size(); ++i) {
      row[Fixed(r.iou_thresholds[i], 2)] = aps[i];
    }
    per_class[std::to_string(cls)] = row;
  }
  j["per_class_ap"] = per_class;
  j["map_50"] = r.map_50;
  j["map_90"] = r.map_90;
  j["best_f1"] = r.best_f1;
  j["best_f1_confidence"] = r.best_f1_confidence;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.f1_curve) {
    curve.push_back({{"cutoff", p.cutoff},
                     {"f1", p.f1},
                     {"precision", p.precision},
                     {"recall", p.recall}});
  }
  j["f1_curve"] = curve;
  return j.dump(2) + "\n";
}

std::string eval_summary_table(const EvalReport& r, const LabelMap& map) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %8s %8s\n", "class", "AP@0.50",
                "AP@0.90");
  out += line;
  auto ap_at = [&](const std::vector<double>& aps, double thr) -> std::string {
    for (std::size_t i = 0; i < r.iou_thresholds.size() && i < aps.size(); ++i) {
      if (r.iou_thresholds[i] == thr) return Fixed(aps[i], 4);
    }
    return "-";
  };
  for (const auto& [cls, aps] : r.per_class_ap) {
    const std::string name =
        map.contains(cls) ? map.name(cls) : "class " + std::to_string(cls);
    std::snprintf(line, sizeof(line), "%-24s %8s %8s\n", name.c_str(),
                  ap_at(aps, 0.5).c_str(), ap_at(aps, 0.9).c_str());
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-24s %8.4f %8.4f\n", "mAP", r.map_50,
                r.map_90);
  out += line;
  std::snprintf(line, sizeof(line), "best F1 %.4f at confidence %.2f\n",
                r.best_f1, r.best_f1_confidence);
  out += line;
  return out;
}

std::string f1_curve_csv(std::span<const F1Point> curve) {
  std::string out = "cutoff,precision,recall,f1\n";
  for (const auto& p : curve) {
    out += Fixed(p.cutoff, 2) + "," + Fixed(p.precision, 6) + "," +
           Fixed(p.recall, 6) + "," + Fixed(p.f1, 6) + "\n";
  }
  return out;
}

std::string pr_curve_csv(const PRCurve& curve) {
  std::string out = "cutoff,precision,recall,f1\n";
  for (const auto& p : curve.points) {
    out += Fixed(p.confidence, 6) + "," + Fixed(p.precision, 6) + "," +
           Fixed(p.recall, 6) + "," + Fixed(f1(p.precision, p.recall), 6) +
           "\n";
  }
  return out;
}

}  // namespace loopmark
