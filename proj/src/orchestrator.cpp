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


#include "loopmark/orchestrator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <nlohmann/json.hpp>
#include <set>

#include "loopmark/error.hpp"
#include "loopmark/fault.hpp"
#include "loopmark/fsutil.hpp"
#include "loopmark/metrics.hpp"

namespace loopmark {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

// Reads fields off one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string context)
      : j_(j), context_(std::move(context)) {
    if (!j.is_object()) throw UserError(context_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw UserError(context_ + "." + key + " has the wrong type");
    }
  }

  const json* object(const char* key) {
    used_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) {
        throw UserError("unknown key " + context_ + "." + key);
      }
    }
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> used_;
};

DegreeRange RangeFromJson(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2) {
    throw UserError(what + " must be a [lo, hi] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

AugmentationSpec AugmentationFromJson(const json& j) {
  AugmentationSpec s;
  ObjectReader r(j, "augmentation");
  r.get("flip_horizontal_probability", s.flip_horizontal_probability);
  if (auto* v = r.object("rotation_range_deg")) {
    s.rotation_range_deg = RangeFromJson(*v, "rotation_range_deg");
  }
  if (auto* v = r.object("shear_range_deg_x")) {
    s.shear_range_deg_x = RangeFromJson(*v, "shear_range_deg_x");
  }
  if (auto* v = r.object("shear_range_deg_y")) {
    s.shear_range_deg_y = RangeFromJson(*v, "shear_range_deg_y");
  }
  r.get("seed", s.seed);
  r.get("copies_per_image", s.copies_per_image);
  r.get("min_area_keep_fraction", s.min_area_keep_fraction);
  if (auto* v = r.object("augmented_budget")) s.augmented_budget = v->get<int>();
  r.finish();
  return s;
}

json AugmentationToJson(const AugmentationSpec& s) {
  json j = {{"flip_horizontal_probability", s.flip_horizontal_probability},
            {"rotation_range_deg",
             {s.rotation_range_deg.lo, s.rotation_range_deg.hi}},
            {"shear_range_deg_x", {s.shear_range_deg_x.lo, s.shear_range_deg_x.hi}},
            {"shear_range_deg_y", {s.shear_range_deg_y.lo, s.shear_range_deg_y.hi}},
            {"seed", s.seed},
            {"copies_per_image", s.copies_per_image},
            {"min_area_keep_fraction", s.min_area_keep_fraction}};
  j["augmented_budget"] =
      s.augmented_budget ? json(*s.augmented_budget) : json(nullptr);
  return j;
}

MockDetectorModel MockFromJson(const json& j) {
  MockDetectorModel m;
  ObjectReader r(j, "adapter.mock");
  r.get("center_jitter", m.center_jitter);
  r.get("size_jitter", m.size_jitter);
  r.get("miss_rate", m.miss_rate);
  r.get("spurious_rate", m.spurious_rate);
  r.get("reference_size", m.reference_size);
  r.get("seed", m.seed);
  r.get("confidence_scale", m.confidence_scale);
  r.finish();
  return m;
}

json MockToJson(const MockDetectorModel& m) {
  return {{"center_jitter", m.center_jitter},
          {"size_jitter", m.size_jitter},
          {"miss_rate", m.miss_rate},
          {"spurious_rate", m.spurious_rate},
          {"reference_size", m.reference_size},
          {"seed", m.seed},
          {"confidence_scale", m.confidence_scale}};
}

AnnotatorCostModel CostsFromJson(const json& j) {
  AnnotatorCostModel c;
  ObjectReader r(j, "costs");
  r.get("review", c.cost_review);
  r.get("adjust", c.cost_adjust);
  r.get("reclass", c.cost_reclass);
  r.get("delete", c.cost_delete);
  r.get("draw", c.cost_draw);
  r.get("accept_iou", c.accept_iou);
  r.get("match_iou", c.match_iou);
  r.finish();
  return c;
}

json CostsToJson(const AnnotatorCostModel& c) {
  return {{"review", c.cost_review},   {"adjust", c.cost_adjust},
          {"reclass", c.cost_reclass}, {"delete", c.cost_delete},
          {"draw", c.cost_draw},       {"accept_iou", c.accept_iou},
          {"match_iou", c.match_iou}};
}

}  // namespace

void LoopConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (max_iterations < 0) throw InvalidArgument("max_iterations must be >= 0");
  augmentation.validate();
  if (auto_accept_confidence &&
      !(*auto_accept_confidence > 0.0 && *auto_accept_confidence <= 1.0)) {
    throw InvalidArgument("auto_accept_confidence must be in (0, 1]");
  }
  if (eval_thresholds.empty()) {
    throw InvalidArgument("eval_thresholds must not be empty");
  }
  for (double t : eval_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw InvalidArgument("eval thresholds must be in (0, 1]");
    }
  }
  if (!(f1_iou_threshold > 0.0 && f1_iou_threshold <= 1.0)) {
    throw InvalidArgument("f1_iou_threshold must be in (0, 1]");
  }
  costs.validate();
  if (detector.kind == "command") {
    detector.command.validate();
  } else if (detector.kind == "mock") {
    detector.mock.validate();
    if (detector.scenario_dir.empty()) {
      throw InvalidArgument("the mock adapter needs a scenario_dir");
    }
  } else {
    throw InvalidArgument("adapter kind must be 'mock' or 'command'");
  }
}

void LoopConfig::apply_seed(std::uint64_t seed) {
  augmentation.seed = seed;
  detector.mock.seed = seed;
}

LoopConfig loop_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UserError(std::string("config is not valid JSON: ") + e.what());
  }
  LoopConfig c;
  try {
    ObjectReader r(j, "config");
    r.get("batch_size", c.batch_size);
    r.get("max_iterations", c.max_iterations);
    if (auto* v = r.object("augmentation")) c.augmentation = AugmentationFromJson(*v);
    if (auto* v = r.object("adapter")) {
      ObjectReader a(*v, "adapter");
      a.get("kind", c.detector.kind);
      a.get("train_command", c.detector.command.train_command);
      a.get("detect_command", c.detector.command.detect_command);
      a.get("timeout_s", c.detector.command.timeout_s);
      a.get("workdir", c.detector.command.workdir);
      a.get("heartbeat_s", c.detector.command.heartbeat_s);
      a.get("scenario_dir", c.detector.scenario_dir);
      if (auto* m = a.object("mock")) c.detector.mock = MockFromJson(*m);
      a.finish();
    }
    if (auto* v = r.object("auto_accept_confidence")) {
      c.auto_accept_confidence = v->get<double>();
    }
    r.get("eval_thresholds", c.eval_thresholds);
    r.get("f1_iou_threshold", c.f1_iou_threshold);
    r.get("finetune", c.finetune);
    if (auto* v = r.object("costs")) c.costs = CostsFromJson(*v);
    if (auto* v = r.object("simulated_review")) {
      ObjectReader s(*v, "simulated_review");
      SimulatedReviewConfig sim;
      s.get("scenario_dir", sim.scenario_dir);
      s.finish();
      c.simulated_review = sim;
    }
    r.get("fixed_clock", c.fixed_clock);
    r.finish();
  } catch (const json::exception& e) {
    throw UserError(std::string("malformed config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw UserError(std::string("invalid config: ") + e.what());
  }
  return c;
}

std::string loop_config_to_json(const LoopConfig& c) {
  json adapter = {{"kind", c.detector.kind},
                  {"train_command", c.detector.command.train_command},
                  {"detect_command", c.detector.command.detect_command},
                  {"timeout_s", c.detector.command.timeout_s},
                  {"workdir", c.detector.command.workdir},
                  {"heartbeat_s", c.detector.command.heartbeat_s},
                  {"scenario_dir", c.detector.scenario_dir},
                  {"mock", MockToJson(c.detector.mock)}};
  json j = {{"batch_size", c.batch_size},
            {"max_iterations", c.max_iterations},
            {"augmentation", AugmentationToJson(c.augmentation)},
            {"adapter", std::move(adapter)},
            {"eval_thresholds", c.eval_thresholds},
            {"f1_iou_threshold", c.f1_iou_threshold},
            {"finetune", c.finetune},
            {"costs", CostsToJson(c.costs)},
            {"fixed_clock", c.fixed_clock}};
  j["auto_accept_confidence"] = c.auto_accept_confidence
                                    ? json(*c.auto_accept_confidence)
                                    : json(nullptr);
  j["simulated_review"] =
      c.simulated_review
          ? json{{"scenario_dir", c.simulated_review->scenario_dir}}
          : json(nullptr);
  return j.dump(2) + "\n";
}

LoopConfig read_loop_config(const fs::path& path) {
  if (!fs::exists(path)) throw UserError("config file " + path.string() + " not found");
  return loop_config_from_json(read_file(path));
}

AugmentationSpec augmentation_spec_from_json(std::string_view text) {
  try {
    AugmentationSpec s = AugmentationFromJson(json::parse(text));
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw UserError(std::string("malformed augmentation spec: ") + e.what());
  }
}

std::unique_ptr<Detector> make_detector(const LoopConfig& cfg) {
  if (cfg.detector.kind == "command") {
    return std::make_unique<CommandDetector>(cfg.detector.command);
  }
  return std::make_unique<MockDetector>(cfg.detector.mock,
                                        cfg.detector.scenario_dir);
}

// ---------------------------------------------------------------------------
// Orchestrator

namespace {

void ResetDir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

void LinkImages(const Workspace& ws, std::span<const std::string> ids,
                const fs::path& images_dir, const fs::path* labels_dir) {
  for (const auto& id : ids) {
    link_or_copy(ws.image_path(id), images_dir / (id + ".png"));
    if (labels_dir) link_or_copy(ws.label_path(id), *labels_dir / (id + ".txt"));
  }
}

}  // namespace

Orchestrator::Orchestrator(Workspace& ws, LoopConfig cfg,
                           std::unique_ptr<Detector> detector)
    : ws_(ws), cfg_(std::move(cfg)), detector_(std::move(detector)) {
  if (!detector_) {
    cfg_.validate();
    detector_ = make_detector(cfg_);
  }
}

std::string Orchestrator::now() const {
  return cfg_.fixed_clock.empty() ? utc_timestamp() : cfg_.fixed_clock;
}

fs::path Orchestrator::IterDir(const char* base, int iteration) const {
  return ws_.root() / base / ("iter_" + std::to_string(iteration));
}

void Orchestrator::Journal(const std::string& event, Phase from, Phase to,
                           int iteration, const std::string& detail) {
  const fs::path path = ws_.root() / "journal.log";
  long seq = 1;
  if (fs::exists(path)) {
    const std::string text = read_file(path);
    seq += static_cast<long>(std::count(text.begin(), text.end(), '\n'));
  }
  json line = {{"seq", seq},
               {"event", event},
               {"iteration", iteration},
               {"from", std::string(to_string(from))},
               {"to", std::string(to_string(to))},
               {"at", now()}};
  if (!detail.empty()) line["detail"] = detail;
  append_line(path, line.dump());
  fault_point("journal");
}

template <typename Body>
void Orchestrator::Transition(Phase from, Phase to, int iteration, Body&& body) {
  Journal("begin", from, to, iteration);
  try {
    Transaction tx = ws_.begin();
    body(tx);
    tx.manifest().loop.phase = to;
    tx.commit();
  } catch (const std::exception& e) {
    Journal("failed", from, to, iteration, e.what());
    throw;
  }
  Journal("commit", from, to, iteration);
}

LoopState Orchestrator::seed(std::span<const fs::path> images,
                             const fs::path& labels_dir, const std::string& tag) {
  auto guard = ws_.lock();
  const Manifest& m = ws_.manifest();
  if (m.loop.phase != Phase::kEmpty) {
    throw PhaseError("workspace is already seeded (phase " +
                     std::string(to_string(m.loop.phase)) + ")");
  }
  if (images.empty()) throw UserError("no seed images given");
  std::vector<std::string> missing;
  for (const auto& p : images) {
    if (!fs::exists(labels_dir / (p.stem().string() + ".txt"))) {
      missing.push_back(p.filename().string());
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += " " + s;
    throw UserError("missing label file for seed image(s):" + list);
  }
  Transition(Phase::kEmpty, Phase::kSeeded, 0, [&](Transaction& tx) {
    Manifest& next = tx.manifest();
    // Images imported earlier without labels are adopted in place.
    std::vector<fs::path> fresh;
    for (const auto& p : images) {
      const std::string id = content_id(read_bytes(p));
      auto it = next.images.find(id);
      if (it == next.images.end()) {
        fresh.push_back(p);
        continue;
      }
      if (it->second.origin != Origin::kManualPending) {
        throw UserError("seed image " + p.string() + " is already in the " +
                        "workspace as " + std::string(to_string(it->second.origin)));
      }
      auto boxes = read_labels(labels_dir / (p.stem().string() + ".txt"));
      validate_against(boxes, next.label_map);
      tx.write_labels(id, boxes);
      it->second.origin = Origin::kManual;
    }
    ws_.stage_import(tx, fresh, Pool::kTrain, labels_dir);
    for (const auto& id : next.train) {
      if (next.images.at(id).origin == Origin::kManualPending) {
        throw UserError("train image " + id + " has no labels");
      }
    }
    LaborSummary labor;
    for (const auto& p : images) {
      labor += manual_labor(read_labels(labels_dir / (p.stem().string() + ".txt")),
                            cfg_.costs);
    }
    next.loop.iteration = 0;
    next.loop.tag = tag;
    next.loop.train_labor = labor;
  });
  return ws_.manifest().loop;
}

StepResult Orchestrator::step() {
  auto guard = ws_.lock();
  const LoopState& s = ws_.manifest().loop;
  if (s.phase == Phase::kEmpty) throw PhaseError("workspace has not been seeded");
  if (s.complete) {
    return {StepStatus::kComplete, s.phase, s.iteration, "loop complete"};
  }
  switch (s.phase) {
    case Phase::kSeeded:
    case Phase::kEvaluated:
      return Augment();
    case Phase::kAugmented:
      return Train();
    case Phase::kTrained:
      return Detect();
    case Phase::kDetected:
      return Export();
    case Phase::kAwaitingReview:
      return Review();
    case Phase::kMerged:
      return Evaluate();
    case Phase::kEmpty:
      break;
  }
  throw std::logic_error("unreachable phase");
}

std::vector<StepResult> Orchestrator::run(int cycles) {
  std::vector<StepResult> out;
  int evaluated = 0;
  while (cycles <= 0 || evaluated < cycles) {
    StepResult r = step();
    out.push_back(r);
    if (r.status != StepStatus::kAdvanced) break;
    if (r.phase == Phase::kEvaluated) {
      ++evaluated;
      if (ws_.manifest().loop.complete) break;
    }
  }
  return out;
}

StepResult Orchestrator::Augment() {
  const LoopState s = ws_.manifest().loop;
  const int it = s.iteration + 1;
  AugmentResult aug;
  Transition(s.phase, Phase::kAugmented, it, [&](Transaction& tx) {
    LoopState& loop = tx.manifest().loop;
    loop.iteration = it;
    loop.iteration_started_at = now();
    loop.weights.clear();
    loop.detector_run_id.clear();
    loop.pending_batch.clear();
    aug = ws_.stage_augment(tx, cfg_.augmentation);
  });
  return {StepStatus::kAdvanced, Phase::kAugmented, it,
          std::to_string(aug.originals) + " originals, " +
              std::to_string(aug.augmented) + " augmented"};
}

StepResult Orchestrator::Train() {
  const Manifest& m = ws_.manifest();
  const int it = m.loop.iteration;
  std::string weights_rel, run_id;
  Transition(Phase::kAugmented, Phase::kTrained, it, [&](Transaction& tx) {
    const fs::path run_dir = IterDir("runs", it);
    const fs::path dataset = run_dir / "dataset";
    fs::remove_all(dataset);
    for (const char* sub : {"images", "labels", "val/images", "val/labels"}) {
      fs::create_directories(dataset / sub);
    }
    const fs::path labels = dataset / "labels", val_labels = dataset / "val/labels";
    LinkImages(ws_, m.train, dataset / "images", &labels);
    LinkImages(ws_, m.val, dataset / "val/images", &val_labels);
    write_dataset_metadata(dataset, m.label_map);
    TrainRequest req;
    req.dataset_dir = dataset;
    req.weights_out = run_dir / "best.weights";
    req.iteration = it;
    if (cfg_.finetune && it > 1) {
      const fs::path prev = IterDir("runs", it - 1) / "best.weights";
      if (fs::exists(prev)) req.weights_in = prev;
    }
    const fs::path weights = detector_->train(req);
    weights_rel = fs::relative(weights, ws_.root()).generic_string();
    run_id = "iter" + std::to_string(it) + "-" +
             sha256_hex(read_bytes(weights)).substr(0, 12);
    tx.manifest().loop.weights = weights_rel;
    tx.manifest().loop.detector_run_id = run_id;
  });
  return {StepStatus::kAdvanced, Phase::kTrained, it, "trained " + run_id};
}

StepResult Orchestrator::Detect() {
  const Manifest& m = ws_.manifest();
  const int it = m.loop.iteration;
  const std::size_t n =
      std::min(m.unlabeled.size(), static_cast<std::size_t>(cfg_.batch_size));
  const std::vector<std::string> batch(m.unlabeled.begin(),
                                       m.unlabeled.begin() + static_cast<long>(n));
  Transition(Phase::kTrained, Phase::kDetected, it, [&](Transaction& tx) {
    const fs::path images = IterDir("runs", it) / "batch_images";
    const fs::path preds = IterDir("predictions", it) / "batch";
    ResetDir(images);
    ResetDir(preds);
    if (!batch.empty()) {
      LinkImages(ws_, batch, images, nullptr);
      detector_->detect({ws_.abs(m.loop.weights), images, preds, it});
    }
    tx.manifest().loop.pending_batch = batch;
  });
  return {StepStatus::kAdvanced, Phase::kDetected, it,
          "detected " + std::to_string(batch.size()) + " images"};
}

ExportResult Orchestrator::export_for_review() {
  auto guard = ws_.lock();
  const Manifest& m = ws_.manifest();
  if (m.loop.phase != Phase::kDetected) {
    throw PhaseError("export needs phase detected, workspace is " +
                     std::string(to_string(m.loop.phase)));
  }
  const int it = m.loop.iteration;
  ExportResult result;
  Transition(Phase::kDetected, Phase::kAwaitingReview, it, [&](Transaction&) {
    result = export_review_bundle(ws_, it, m.loop.pending_batch,
                                  IterDir("predictions", it) / "batch",
                                  cfg_.auto_accept_confidence, now());
  });
  spdlog::info("exported {} images for review in {:.3f}s", result.images,
               result.seconds);
  return result;
}

StepResult Orchestrator::Export() {
  const ExportResult r = export_for_review();
  return {StepStatus::kAdvanced, Phase::kAwaitingReview,
          ws_.manifest().loop.iteration,
          "exported " + std::to_string(r.images) + " images for review"};
}

StepResult Orchestrator::Review() {
  const Manifest& m = ws_.manifest();
  const int it = m.loop.iteration;
  const auto& batch = m.loop.pending_batch;
  if (batch.empty()) {
    finalize_review({});
    return {StepStatus::kAdvanced, Phase::kMerged, it, "nothing to review"};
  }
  ReviewBundle bundle(ws_.root(), it);
  ReviewSession session = bundle.load_session();
  if (cfg_.simulated_review) {
    if (!review_truth_) {
      review_truth_ = GroundTruth::load(cfg_.simulated_review->scenario_dir);
    }
    std::map<std::string, std::vector<BoundingBox>> corrected;
    for (const auto& id : batch) {
      ReviewItem& item = session.items.at(id);
      if (item.status == ItemStatus::kAccepted) {
        corrected[id] = bundle.final_labels(id);
        continue;
      }
      corrected[id] = review_truth_->at(id);
      bundle.stage_correction(id, corrected[id]);
      item.status = ItemStatus::kEdited;
    }
    session.updated_at = now();
    bundle.save_session(session);
    finalize_review(corrected);
    return {StepStatus::kAdvanced, Phase::kMerged, it,
            "merged " + std::to_string(batch.size()) + " simulated reviews"};
  }
  const auto pending = session.pending();
  if (!pending.empty()) {
    return {StepStatus::kReviewPending, Phase::kAwaitingReview, it,
            "review pending: " + std::to_string(pending.size()) + " of " +
                std::to_string(batch.size()) + " items not yet reviewed"};
  }
  merge_from_bundle();
  return {StepStatus::kAdvanced, Phase::kMerged, it,
          "merged " + std::to_string(batch.size()) + " reviewed images"};
}

void Orchestrator::merge_from_bundle() {
  auto guard = ws_.lock();
  const Manifest& m = ws_.manifest();
  if (m.loop.phase != Phase::kAwaitingReview) {
    throw PhaseError("merge needs phase awaiting-review, workspace is " +
                     std::string(to_string(m.loop.phase)));
  }
  ReviewBundle bundle(ws_.root(), m.loop.iteration);
  std::map<std::string, std::vector<BoundingBox>> corrected;
  for (const auto& id : m.loop.pending_batch) {
    try {
      corrected[id] = bundle.final_labels(id);
    } catch (const FormatError& e) {
      throw UserError("corrected labels for " + id + ": " + e.what());
    }
  }
  finalize_review(corrected);
}

void Orchestrator::finalize_review(
    const std::map<std::string, std::vector<BoundingBox>>& corrected,
    std::optional<LaborSummary> labor) {
  auto guard = ws_.lock();
  const Manifest& m = ws_.manifest();
  if (m.loop.phase != Phase::kAwaitingReview) {
    throw PhaseError("no review is open (phase " +
                     std::string(to_string(m.loop.phase)) + ")");
  }
  const int it = m.loop.iteration;
  const std::set<std::string> expected(m.loop.pending_batch.begin(),
                                       m.loop.pending_batch.end());
  for (const auto& [id, boxes] : corrected) {
    if (!expected.count(id)) {
      throw UserError("image " + id + " is not part of this review batch");
    }
  }
  for (const auto& id : expected) {
    if (!corrected.count(id)) {
      throw UserError("no corrected labels for image " + id);
    }
  }
  ReviewBundle bundle(ws_.root(), it);
  if (!labor) {
    // Priced against what the detector emitted, not the editable copies.
    const fs::path preds = IterDir("predictions", it) / "batch";
    LaborSummary total;
    for (const auto& [id, boxes] : corrected) {
      total += simulate_review(read_predictions(preds / (id + ".txt")), boxes,
                               cfg_.costs)
                   .labor;
    }
    labor = total;
  }
  Transition(Phase::kAwaitingReview, Phase::kMerged, it, [&](Transaction& tx) {
    ws_.stage_merge(tx, it, corrected, *labor);
  });
  if (bundle.exists()) {
    ReviewSession session = bundle.load_session();
    session.finalized = true;
    session.updated_at = now();
    bundle.save_session(session);
  }
}

StepResult Orchestrator::Evaluate() {
  const Manifest& m = ws_.manifest();
  const int it = m.loop.iteration;
  std::optional<EvalSummary> summary;
  Transition(Phase::kMerged, Phase::kEvaluated, it, [&](Transaction& tx) {
    if (!m.val.empty()) {
      const fs::path images = IterDir("runs", it) / "val_images";
      const fs::path preds = IterDir("predictions", it) / "val";
      ResetDir(images);
      ResetDir(preds);
      LinkImages(ws_, m.val, images, nullptr);
      detector_->detect({ws_.abs(m.loop.weights), images, preds, it});
      std::vector<ImageEval> evals;
      for (const auto& id : m.val) {
        evals.push_back({read_predictions(preds / (id + ".txt")), ws_.labels(id)});
      }
      EvalOptions opts;
      opts.iou_thresholds = cfg_.eval_thresholds;
      opts.f1_iou_threshold = cfg_.f1_iou_threshold;
      const EvalReport report = evaluate(evals, opts);
      const fs::path out = IterDir("reports", it);
      fs::create_directories(out);
      write_file_atomic(out / "eval.json", eval_report_json(report));
      write_file_atomic(out / "f1_curve.csv", f1_curve_csv(report.f1_curve));
      write_file_atomic(out / "summary.txt",
                        eval_summary_table(report, m.label_map));
      summary = EvalSummary{report.best_f1, report.best_f1_confidence,
                            report.map_50, report.map_90,
                            static_cast<int>(m.val.size())};
    }
    Manifest& next = tx.manifest();
    IterationRecord rec;
    rec.index = it;
    rec.tag = next.loop.tag;
    rec.train_size_original = next.loop.train_original;
    rec.train_size_augmented = next.loop.train_augmented;
    rec.train_size_total = rec.train_size_original + rec.train_size_augmented;
    rec.eval = summary;
    rec.labor = next.loop.train_labor;
    rec.detector_run_id = next.loop.detector_run_id;
    rec.started_at = next.loop.iteration_started_at;
    rec.finished_at = now();
    next.iterations.push_back(rec);
    next.loop.train_labor = next.loop.batch_labor;
    next.loop.batch_labor = {};
    next.loop.complete =
        next.loop.pending_batch.empty() ||
        (cfg_.max_iterations > 0 && it >= cfg_.max_iterations);
  });
  std::string msg = "iteration " + std::to_string(it) + " evaluated";
  if (summary) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": best F1 %.4f, mAP@0.5 %.4f",
                  summary->best_f1, summary->map_50);
    msg += buf;
  }
  return {StepStatus::kAdvanced, Phase::kEvaluated, it, msg};
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string Fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string report_csv(const Manifest& m) {
  std::string out =
      "iteration,tag,train_size_original,train_size_augmented,train_size_total,"
      "best_f1,best_f1_confidence,map50,map90,labor_total,labor_per_image,"
      "labor_manual_equivalent\n";
  for (const auto& r : m.iterations) {
    out += std::to_string(r.index) + "," + r.tag + "," +
           std::to_string(r.train_size_original) + "," +
           std::to_string(r.train_size_augmented) + "," +
           std::to_string(r.train_size_total) + ",";
    if (r.eval) {
      out += Fixed(r.eval->best_f1) + "," + Fixed(r.eval->best_f1_confidence) +
             "," + Fixed(r.eval->map_50) + "," + Fixed(r.eval->map_90) + ",";
    } else {
      out += ",,,,";
    }
    out += Fixed(r.labor.total) + "," + Fixed(r.labor.per_image()) + "," +
           Fixed(r.labor.manual_equivalent) + "\n";
  }
  return out;
}

std::string report_table(const Manifest& m) {
  if (m.iterations.empty()) return "no iterations\n";
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-5s %-9s %6s %6s %6s %8s %8s %8s %10s %9s\n",
                "iter", "tag", "orig", "aug", "total", "best_f1", "mAP@.5",
                "mAP@.9", "labor", "per_img");
  out += line;
  for (const auto& r : m.iterations) {
    const auto metric = [&](double EvalSummary::*field) {
      return r.eval ? Fixed((*r.eval).*field, 4) : std::string("-");
    };
    std::snprintf(line, sizeof line,
                  "%-5d %-9s %6d %6d %6d %8s %8s %8s %10.2f %9.3f\n", r.index,
                  r.tag.empty() ? "-" : r.tag.c_str(), r.train_size_original,
                  r.train_size_augmented, r.train_size_total,
                  metric(&EvalSummary::best_f1).c_str(),
                  metric(&EvalSummary::map_50).c_str(),
                  metric(&EvalSummary::map_90).c_str(), r.labor.total,
                  r.labor.per_image());
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::vector<IterationRecord> RunOne(const SimulationOptions& opts,
                                    const fs::path& ws_dir, LoopConfig cfg,
                                    bool baseline) {
  const fs::path& sc = opts.scenario_dir;
  fs::remove_all(ws_dir);
  Workspace ws = Workspace::init(ws_dir, read_label_map(sc / "classes.txt"));
  Orchestrator orch(ws, cfg);
  const auto val = list_files(sc / "val/images", ".png");
  ws.import_images(val, Pool::kVal, sc / "val/labels");
  if (baseline) {
    auto all = list_files(sc / "seed/images", ".png");
    const auto pool = list_files(sc / "pool/images", ".png");
    all.insert(all.end(), pool.begin(), pool.end());
    orch.seed(all, sc / "simulation/ground_truth", "baseline");
  } else {
    orch.seed(list_files(sc / "seed/images", ".png"), sc / "seed/labels");
    ws.import_images(list_files(sc / "pool/images", ".png"), Pool::kUnlabeled);
  }
  orch.run(0);
  return ws.manifest().iterations;
}

}  // namespace

SimulationResult run_simulation(const SimulationOptions& opts) {
  if (opts.seeds < 1) throw UserError("simulation needs at least one seed");
  if (!fs::exists(opts.scenario_dir / "scenario.json")) {
    throw UserError("no scenario at " + opts.scenario_dir.string());
  }
  LoopConfig base = opts.config;
  const std::string scenario = fs::absolute(opts.scenario_dir).string();
  base.detector.kind = "mock";
  base.detector.scenario_dir = scenario;
  base.simulated_review = SimulatedReviewConfig{scenario};
  if (base.fixed_clock.empty()) base.fixed_clock = "1970-01-01T00:00:00Z";
  base.validate();
  fs::create_directories(opts.out_dir);

  SimulationResult result;
  for (int k = 1; k <= opts.seeds; ++k) {
    LoopConfig cfg = base;
    cfg.apply_seed(static_cast<std::uint64_t>(k));
    spdlog::info("simulation seed {}/{}", k, opts.seeds);
    result.per_seed.push_back(
        RunOne(opts, opts.out_dir / ("seed_" + std::to_string(k)), cfg, false));
  }
  if (opts.baseline) {
    LoopConfig cfg = base;
    cfg.apply_seed(1);
    cfg.max_iterations = 1;
    result.baseline = RunOne(opts, opts.out_dir / "baseline", cfg, true);
  }

  result.per_seed_csv =
      "seed,iteration,train_size,best_f1,map50,map90,labor_total,"
      "labor_per_image,labor_manual_equivalent\n";
  std::size_t rows = 0;
  for (std::size_t k = 0; k < result.per_seed.size(); ++k) {
    rows = std::max(rows, result.per_seed[k].size());
    for (const auto& r : result.per_seed[k]) {
      const EvalSummary e = r.eval.value_or(EvalSummary{});
      result.per_seed_csv +=
          std::to_string(k + 1) + "," + std::to_string(r.index) + "," +
          std::to_string(r.train_size_original) + "," + Fixed(e.best_f1) + "," +
          Fixed(e.map_50) + "," + Fixed(e.map_90) + "," + Fixed(r.labor.total) +
          "," + Fixed(r.labor.per_image()) + "," +
          Fixed(r.labor.manual_equivalent) + "\n";
    }
  }
  result.summary_csv =
      "iteration,train_size,best_f1,map50,map90,labor_total,labor_per_image\n";
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> size, f1, m50, m90, labor, per;
    for (const auto& recs : result.per_seed) {
      if (i >= recs.size()) continue;
      const auto& r = recs[i];
      const EvalSummary e = r.eval.value_or(EvalSummary{});
      size.push_back(r.train_size_original);
      f1.push_back(e.best_f1);
      m50.push_back(e.map_50);
      m90.push_back(e.map_90);
      labor.push_back(r.labor.total);
      per.push_back(r.labor.per_image());
    }
    result.summary_csv += std::to_string(i + 1) + "," +
                          std::to_string(static_cast<int>(Median(size))) + "," +
                          Fixed(Median(f1)) + "," + Fixed(Median(m50)) + "," +
                          Fixed(Median(m90)) + "," + Fixed(Median(labor)) + "," +
                          Fixed(Median(per)) + "\n";
  }
  for (const auto& r : result.baseline) {
    const EvalSummary e = r.eval.value_or(EvalSummary{});
    result.summary_csv += "baseline," + std::to_string(r.train_size_original) +
                          "," + Fixed(e.best_f1) + "," + Fixed(e.map_50) + "," +
                          Fixed(e.map_90) + "," + Fixed(r.labor.total) + "," +
                          Fixed(r.labor.per_image()) + "\n";
  }
  write_file_atomic(opts.out_dir / "summary.csv", result.summary_csv);
  write_file_atomic(opts.out_dir / "seeds.csv", result.per_seed_csv);
  return result;
}

}  // namespace loopmark
