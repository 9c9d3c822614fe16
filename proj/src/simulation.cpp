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


#include "loopmark/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"
#include "loopmark/geometry.hpp"
#include "loopmark/metrics.hpp"
#include "loopmark/raster.hpp"
#include "loopmark/rng.hpp"

namespace loopmark {

namespace fs = std::filesystem;
using nlohmann::json;

void MockDetectorModel::validate() const {
  if (!(center_jitter >= 0.0) || !(size_jitter >= 0.0)) {
    throw InvalidArgument("mock jitters must be >= 0");
  }
  if (!(miss_rate >= 0.0 && miss_rate < 1.0)) {
    throw InvalidArgument("mock miss_rate must be in [0, 1)");
  }
  if (!(spurious_rate >= 0.0 && spurious_rate < 1.0)) {
    throw InvalidArgument("mock spurious_rate must be in [0, 1)");
  }
  if (reference_size < 1) throw InvalidArgument("mock reference_size must be >= 1");
  if (!(confidence_scale > 0.0)) {
    throw InvalidArgument("mock confidence_scale must be > 0");
  }
}

MockWeights mock_train(const MockDetectorModel& model, int train_size) {
  model.validate();
  if (train_size < 1) {
    throw InvalidArgument("mock training needs at least one image");
  }
  const double s = std::sqrt(static_cast<double>(model.reference_size) /
                             static_cast<double>(train_size));
  const double rate_scale = std::min(1.0, s);
  MockWeights w;
  w.train_size = train_size;
  w.center_jitter = model.center_jitter * s;
  w.size_jitter = model.size_jitter * s;
  w.miss_rate = model.miss_rate * rate_scale;
  w.spurious_rate = model.spurious_rate * rate_scale;
  w.confidence_scale = model.confidence_scale;
  w.seed = model.seed;
  return w;
}

std::string mock_weights_to_json(const MockWeights& w) {
  json j = {{"kind", "loopmark-mock"},
            {"train_size", w.train_size},
            {"center_jitter", w.center_jitter},
            {"size_jitter", w.size_jitter},
            {"miss_rate", w.miss_rate},
            {"spurious_rate", w.spurious_rate},
            {"confidence_scale", w.confidence_scale},
            {"seed", w.seed}};
  return j.dump(2) + "\n";
}

MockWeights mock_weights_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.value("kind", "") != "loopmark-mock") {
      throw InvalidArgument("not a mock weights file");
    }
    MockWeights w;
    w.train_size = j.at("train_size").get<int>();
    w.center_jitter = j.at("center_jitter").get<double>();
    w.size_jitter = j.at("size_jitter").get<double>();
    w.miss_rate = j.at("miss_rate").get<double>();
    w.spurious_rate = j.at("spurious_rate").get<double>();
    w.confidence_scale = j.at("confidence_scale").get<double>();
    w.seed = j.at("seed").get<std::uint64_t>();
    return w;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed mock weights: ") + e.what());
  }
}

namespace {

// Box from clipped edges, or nullopt when too thin to keep.
std::optional<BoundingBox> FromEdges(int cls, double x0, double y0, double x1,
                                     double y1) {
  x0 = std::clamp(x0, 0.0, 1.0);
  x1 = std::clamp(x1, 0.0, 1.0);
  y0 = std::clamp(y0, 0.0, 1.0);
  y1 = std::clamp(y1, 0.0, 1.0);
  if (x1 - x0 < 1e-3 || y1 - y0 < 1e-3) return std::nullopt;
  return BoundingBox{cls, (x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0};
}

}  // namespace

std::vector<Prediction> mock_detect(const MockWeights& w,
                                    std::string_view image_id,
                                    std::span<const BoundingBox> truth,
                                    int num_classes) {
  std::vector<Prediction> out;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const BoundingBox& g = truth[j];
    Rng rng(w.seed, "mock-box", image_id, j);
    const double u_miss = rng.uniform();
    const double z[4] = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    if (u_miss < w.miss_rate) continue;
    const double dx = w.center_jitter * z[0];
    const double dy = w.center_jitter * z[1];
    const double fw = std::max(0.2, 1.0 + w.size_jitter * z[2]);
    const double fh = std::max(0.2, 1.0 + w.size_jitter * z[3]);
    const double cx = g.cx + dx * g.w, cy = g.cy + dy * g.h;
    const double bw = g.w * fw, bh = g.h * fh;
    auto box = FromEdges(g.class_id, cx - bw / 2, cy - bh / 2, cx + bw / 2,
                         cy + bh / 2);
    if (!box) continue;
    const double magnitude = std::sqrt(dx * dx + dy * dy + (fw - 1) * (fw - 1) +
                                       (fh - 1) * (fh - 1));
    const double conf =
        std::clamp(1.0 - magnitude / w.confidence_scale, 0.05, 0.99);
    out.push_back(canonical(Prediction{*box, conf}));
  }
  if (!truth.empty() && num_classes > 0) {
    Rng count_rng(w.seed, "mock-spurious", image_id, 0);
    const int k = Rng::poisson_from_uniform(
        w.spurious_rate * static_cast<double>(truth.size()), count_rng.uniform());
    for (int i = 0; i < k; ++i) {
      Rng rng(w.seed, "mock-spurious", image_id, static_cast<std::uint64_t>(i) + 1);
      const int cls = rng.uniform_int(0, num_classes - 1);
      const double bw = rng.uniform(0.05, 0.3), bh = rng.uniform(0.05, 0.3);
      const double cx = rng.uniform(bw / 2, 1 - bw / 2);
      const double cy = rng.uniform(bh / 2, 1 - bh / 2);
      const double conf = rng.uniform(0.05, 0.35);
      auto box = FromEdges(cls, cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2);
      if (box) out.push_back(canonical(Prediction{*box, conf}));
    }
  }
  return out;
}

void AnnotatorCostModel::validate() const {
  for (double c : {cost_review, cost_adjust, cost_reclass, cost_delete, cost_draw}) {
    if (!(c >= 0.0)) throw InvalidArgument("annotator costs must be >= 0");
  }
  if (cost_draw < cost_adjust) {
    throw InvalidArgument("cost_draw must be >= cost_adjust");
  }
  if (!(accept_iou >= 0.5 && accept_iou <= 1.0)) {
    throw InvalidArgument("accept_iou must be in [0.5, 1]");
  }
  if (!(match_iou > 0.0 && match_iou <= 1.0)) {
    throw InvalidArgument("match_iou must be in (0, 1]");
  }
}

ReviewOutcome simulate_review(std::span<const Prediction> predictions,
                              std::span<const BoundingBox> truth,
                              const AnnotatorCostModel& costs) {
  ReviewOutcome out;
  out.corrected.assign(truth.begin(), truth.end());
  LaborSummary& l = out.labor;
  l.images = 1;
  l.boxes = static_cast<int>(truth.size());
  l.manual_equivalent = costs.cost_draw * static_cast<double>(truth.size());
  MatchConfig cfg;
  cfg.iou_threshold = costs.match_iou;
  cfg.class_agnostic = true;
  const MatchResult m = match_detections(predictions, truth, cfg);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int g = m.matched_truth[i];
    if (g < 0) {
      ++l.edits.remove;
      l.total += costs.cost_delete;
      continue;
    }
    const BoundingBox& t = truth[static_cast<std::size_t>(g)];
    const bool same_class = predictions[i].box.class_id == t.class_id;
    const bool tight = iou(predictions[i].box, t) >= costs.accept_iou;
    if (same_class && tight) {
      ++l.edits.review;
      l.total += costs.cost_review;
      continue;
    }
    if (!tight) {
      ++l.edits.adjust;
      l.total += costs.cost_adjust;
    }
    if (!same_class) {
      ++l.edits.reclass;
      l.total += costs.cost_reclass;
    }
  }
  l.edits.draw = m.unmatched_truths;
  l.total += costs.cost_draw * m.unmatched_truths;
  return out;
}

LaborSummary manual_labor(std::span<const BoundingBox> truth,
                          const AnnotatorCostModel& costs) {
  return simulate_review({}, truth, costs).labor;
}

// ---------------------------------------------------------------------------
// Scenarios

void ScenarioSpec::validate() const {
  if (seed_images < 1) throw InvalidArgument("scenario needs seed images");
  if (pool_images < 0 || val_images < 1) {
    throw InvalidArgument("scenario pool/val sizes are invalid");
  }
  if (width < 16 || height < 16) throw InvalidArgument("scenario images too small");
  if (min_boxes < 0 || max_boxes < min_boxes) {
    throw InvalidArgument("scenario box counts are invalid");
  }
  if (classes.empty()) throw InvalidArgument("scenario needs classes");
}

namespace {

json SpecToJson(const ScenarioSpec& s) {
  return {{"seed_images", s.seed_images}, {"pool_images", s.pool_images},
          {"val_images", s.val_images},   {"width", s.width},
          {"height", s.height},           {"min_boxes", s.min_boxes},
          {"max_boxes", s.max_boxes},     {"seed", s.seed},
          {"classes", s.classes}};
}

std::string ImageName(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04d", k);
  return buf;
}

Raster RenderImage(const ScenarioSpec& spec, std::string_view name,
                   std::span<const BoundingBox> boxes) {
  Rng rng(spec.seed, "scenario-pixels", name);
  Raster r(spec.width, spec.height);
  const int base = 80 + rng.uniform_int(0, 60);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      const auto v = static_cast<std::uint8_t>(base + rng.uniform_int(0, 24));
      r.set(x, y, {v, v, static_cast<std::uint8_t>(v / 2 + 40)});
    }
  }
  const ImageDims dims{spec.width, spec.height};
  for (const auto& b : boxes) {
    const PixelRect p = to_pixels(b, dims);
    const auto shade = static_cast<std::uint8_t>(160 + 40 * (b.class_id % 3));
    const Rgb color = b.class_id % 2 == 0 ? Rgb{shade, 120, 40}
                                          : Rgb{40, shade, 60};
    r.fill_rect(static_cast<int>(std::lround(p.x0)),
                static_cast<int>(std::lround(p.y0)),
                static_cast<int>(std::lround(p.x1)),
                static_cast<int>(std::lround(p.y1)), color);
  }
  return r;
}

}  // namespace

void generate_scenario(const fs::path& dir, const ScenarioSpec& spec) {
  spec.validate();
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    throw UserError("scenario directory " + dir.string() + " is not empty");
  }
  const LabelMap label_map(spec.classes);
  for (const char* sub : {"seed/images", "seed/labels", "pool/images",
                          "val/images", "val/labels",
                          "simulation/ground_truth"}) {
    fs::create_directories(dir / sub);
  }
  write_label_map(dir / "classes.txt", label_map);
  write_file_atomic(dir / "scenario.json", SpecToJson(spec).dump(2) + "\n");
  const int nc = static_cast<int>(spec.classes.size());
  const int total = spec.seed_images + spec.pool_images + spec.val_images;
  json index = json::object();
  for (int k = 0; k < total; ++k) {
    const std::string name = ImageName(k);
    Rng rng(spec.seed, "scenario-boxes", name);
    const int n = rng.uniform_int(spec.min_boxes, spec.max_boxes);
    std::vector<BoundingBox> boxes;
    for (int i = 0; i < n; ++i) {
      const int cls = rng.uniform_int(0, nc - 1);
      const double w = rng.uniform(0.08, 0.35), h = rng.uniform(0.08, 0.35);
      const double cx = rng.uniform(w / 2, 1 - w / 2);
      const double cy = rng.uniform(h / 2, 1 - h / 2);
      boxes.push_back(canonical(BoundingBox{cls, cx, cy, w, h}));
    }
    const std::vector<std::uint8_t> png = encode_png(RenderImage(spec, name, boxes));
    const std::string_view bytes(reinterpret_cast<const char*>(png.data()),
                                 png.size());
    const char* part = k < spec.seed_images                      ? "seed"
                       : k < spec.seed_images + spec.pool_images ? "pool"
                                                                 : "val";
    write_file_atomic(dir / part / "images" / (name + ".png"), bytes);
    if (std::string_view(part) != "pool") {
      write_labels(dir / part / "labels" / (name + ".txt"), boxes);
    }
    write_labels(dir / "simulation/ground_truth" / (name + ".txt"), boxes);
    index[content_id(png)] = name;
  }
  write_file_atomic(dir / "simulation/index.json", index.dump(2) + "\n");
}

ScenarioSpec read_scenario_spec(const fs::path& dir) {
  try {
    const json j = json::parse(read_file(dir / "scenario.json"));
    ScenarioSpec s;
    s.seed_images = j.at("seed_images").get<int>();
    s.pool_images = j.at("pool_images").get<int>();
    s.val_images = j.at("val_images").get<int>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.min_boxes = j.at("min_boxes").get<int>();
    s.max_boxes = j.at("max_boxes").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.classes = j.at("classes").get<std::vector<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw UserError("malformed scenario.json: " + std::string(e.what()));
  }
}

GroundTruth GroundTruth::load(const fs::path& dir) {
  const fs::path sim =
      fs::exists(dir / "simulation") ? dir / "simulation" : dir;
  GroundTruth gt;
  try {
    const json index = json::parse(read_file(sim / "index.json"));
    for (const auto& [id, name] : index.items()) {
      gt.labels_[id] =
          read_labels(sim / "ground_truth" / (name.get<std::string>() + ".txt"));
    }
  } catch (const json::exception& e) {
    throw UserError("malformed scenario index: " + std::string(e.what()));
  }
  return gt;
}

const std::vector<BoundingBox>* GroundTruth::find(const std::string& image_id) const {
  auto it = labels_.find(image_id);
  return it == labels_.end() ? nullptr : &it->second;
}

const std::vector<BoundingBox>& GroundTruth::at(const std::string& image_id) const {
  const auto* found = find(image_id);
  if (!found) throw UserError("no hidden labels for image " + image_id);
  return *found;
}

int count_original_images(const fs::path& images_dir) {
  int n = 0;
  for (const auto& f : list_files(images_dir, ".png")) {
    if (f.stem().string().find("__aug") == std::string::npos) ++n;
  }
  return n;
}

MockDetector::MockDetector(MockDetectorModel model, fs::path scenario_dir)
    : model_(std::move(model)), scenario_dir_(std::move(scenario_dir)) {
  model_.validate();
}

fs::path MockDetector::train(const TrainRequest& req) {
  const int n = count_original_images(req.dataset_dir / "images");
  if (n < 1) throw TrainFailed("mock training found no original images");
  const MockWeights w = mock_train(model_, n);
  write_file_atomic(req.weights_out, mock_weights_to_json(w));
  return req.weights_out;
}

int MockDetector::detect(const DetectRequest& req) {
  if (!fs::is_regular_file(req.weights)) {
    throw MissingWeights("weights file " + req.weights.string() +
                         " does not exist");
  }
  const MockWeights w = mock_weights_from_json(read_file(req.weights));
  if (!truth_) {
    truth_ = GroundTruth::load(scenario_dir_);
    num_classes_ =
        static_cast<int>(read_label_map(scenario_dir_ / "classes.txt").size());
  }
  fs::create_directories(req.predictions_dir);
  for (const auto& image : list_files(req.images_dir, ".png")) {
    const std::string id = image.stem().string();
    const auto* truth = truth_->find(id);
    if (!truth) throw DetectFailed("mock detector has no hidden labels for " + id);
    write_predictions(req.predictions_dir / (id + ".txt"),
                      mock_detect(w, id, *truth, num_classes_));
  }
  return validate_predictions(req.images_dir, req.predictions_dir);
}

}  // namespace loopmark
