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


#include "loopmark/review.hpp"

#include <charconv>
#include <chrono>
#include <nlohmann/json.hpp>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"

namespace loopmark {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kStatusNames[] = {"pending", "edited", "accepted"};

}  // namespace

std::string_view to_string(ItemStatus s) {
  return kStatusNames[static_cast<std::size_t>(s)];
}

ItemStatus item_status_from_string(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kStatusNames); ++i) {
    if (kStatusNames[i] == s) return static_cast<ItemStatus>(i);
  }
  throw InvalidArgument("unknown item status '" + std::string(s) + "'");
}

std::vector<std::string> ReviewSession::pending() const {
  std::vector<std::string> out;
  for (const auto& [id, item] : items) {
    if (item.status == ItemStatus::kPending) out.push_back(id);
  }
  return out;
}

std::string session_to_json(const ReviewSession& s) {
  json items = json::object();
  for (const auto& [id, item] : s.items) {
    items[id] = {{"status", std::string(to_string(item.status))},
                 {"predictions", item.predictions},
                 {"pre_accepted", item.pre_accepted}};
  }
  json j = {{"iteration", s.iteration},
            {"items", std::move(items)},
            {"started_at", s.started_at},
            {"updated_at", s.updated_at},
            {"finalized", s.finalized}};
  j["auto_accept_confidence"] =
      s.auto_accept_confidence ? json(*s.auto_accept_confidence) : json(nullptr);
  return j.dump(2) + "\n";
}

ReviewSession session_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    ReviewSession s;
    s.iteration = j.at("iteration").get<int>();
    for (const auto& [id, item] : j.at("items").items()) {
      ReviewItem r;
      r.status = item_status_from_string(item.at("status").get<std::string>());
      r.predictions = item.at("predictions").get<int>();
      r.pre_accepted = item.at("pre_accepted").get<int>();
      s.items.emplace(id, r);
    }
    s.started_at = j.at("started_at").get<std::string>();
    s.updated_at = j.at("updated_at").get<std::string>();
    s.finalized = j.at("finalized").get<bool>();
    const json& a = j.at("auto_accept_confidence");
    if (!a.is_null()) s.auto_accept_confidence = a.get<double>();
    return s;
  } catch (const json::exception& e) {
    throw CorruptWorkspace(std::string("malformed review session: ") + e.what());
  }
}

std::vector<bool> pre_accept_flags(std::span<const Prediction> preds,
                                   std::optional<double> threshold) {
  std::vector<bool> flags(preds.size(), false);
  if (!threshold) return flags;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    flags[i] = preds[i].confidence >= *threshold;
  }
  return flags;
}

bool item_pre_accepted(std::span<const Prediction> preds,
                       std::optional<double> threshold) {
  if (!threshold || preds.empty()) return false;
  for (const auto& p : preds) {
    if (p.confidence < *threshold) return false;
  }
  return true;
}

ReviewBundle::ReviewBundle(fs::path workspace_root, int iteration)
    : root_(std::move(workspace_root)),
      iteration_(iteration),
      dir_(root_ / "review" / ("iter_" + std::to_string(iteration))) {}

fs::path ReviewBundle::image_path(const std::string& id) const {
  return dir_ / "images" / (id + ".png");
}
fs::path ReviewBundle::labels_path(const std::string& id) const {
  return dir_ / "labels" / (id + ".txt");
}
fs::path ReviewBundle::confidences_path(const std::string& id) const {
  return dir_ / "confidences" / (id + ".txt");
}
fs::path ReviewBundle::staging_path(const std::string& id) const {
  return dir_ / "staging" / (id + ".txt");
}
fs::path ReviewBundle::session_path() const { return dir_ / "session.json"; }

bool ReviewBundle::exists() const { return fs::exists(session_path()); }

ReviewSession ReviewBundle::load_session() const {
  if (!exists()) {
    throw UserError("no review session for iteration " +
                    std::to_string(iteration_));
  }
  return session_from_json(read_file(session_path()));
}

void ReviewBundle::save_session(const ReviewSession& s) const {
  write_file_atomic(session_path(), session_to_json(s), true);
}

std::vector<Prediction> ReviewBundle::predictions(const std::string& id) const {
  const auto boxes = read_labels(labels_path(id));
  const std::string conf_text = read_file(confidences_path(id));
  std::vector<Prediction> out;
  std::size_t pos = 0;
  for (const auto& b : boxes) {
    const std::size_t nl = conf_text.find('\n', pos);
    if (nl == std::string::npos) {
      throw CorruptWorkspace("confidence sidecar for " + id +
                             " is shorter than its label file");
    }
    double conf = 0.0;
    const char* first = conf_text.data() + pos;
    const auto [end, ec] = std::from_chars(first, conf_text.data() + nl, conf);
    if (ec != std::errc() || end != conf_text.data() + nl) {
      throw CorruptWorkspace("bad confidence value in sidecar for " + id);
    }
    out.push_back(Prediction{b, conf});
    pos = nl + 1;
  }
  if (pos != conf_text.size()) {
    throw CorruptWorkspace("confidence sidecar for " + id +
                           " is longer than its label file");
  }
  return out;
}

void ReviewBundle::stage_correction(const std::string& id,
                                    std::span<const BoundingBox> boxes) const {
  write_file_atomic(staging_path(id), serialize_labels(boxes), true);
}

std::optional<std::vector<BoundingBox>> ReviewBundle::staged_correction(
    const std::string& id) const {
  if (!fs::exists(staging_path(id))) return std::nullopt;
  return read_labels(staging_path(id));
}

std::vector<BoundingBox> ReviewBundle::final_labels(const std::string& id) const {
  if (auto staged = staged_correction(id)) return *staged;
  return read_labels(labels_path(id));
}

ExportResult export_review_bundle(const Workspace& ws, int iteration,
                                  std::span<const std::string> ids,
                                  const fs::path& predictions_dir,
                                  std::optional<double> auto_accept_confidence,
                                  const std::string& now) {
  const auto start = std::chrono::steady_clock::now();
  ReviewBundle bundle(ws.root(), iteration);
  fs::remove_all(bundle.dir());
  for (const char* sub : {"images", "labels", "confidences", "staging"}) {
    fs::create_directories(bundle.dir() / sub);
  }
  write_label_map(bundle.dir() / "classes.txt", ws.manifest().label_map);
  ReviewSession session;
  session.iteration = iteration;
  session.auto_accept_confidence = auto_accept_confidence;
  session.started_at = now;
  session.updated_at = now;
  ExportResult result;
  for (const auto& id : ids) {
    const auto preds = read_predictions(predictions_dir / (id + ".txt"));
    link_or_copy(ws.image_path(id), bundle.image_path(id));
    write_labels(bundle.labels_path(id), strip_confidence(preds));
    std::string conf;
    for (const auto& p : preds) conf += format_fixed6(p.confidence) + "\n";
    write_file_atomic(bundle.confidences_path(id), conf);
    ReviewItem item;
    item.predictions = static_cast<int>(preds.size());
    for (bool f : pre_accept_flags(preds, auto_accept_confidence)) {
      item.pre_accepted += f ? 1 : 0;
    }
    if (item_pre_accepted(preds, auto_accept_confidence)) {
      item.status = ItemStatus::kAccepted;
      ++result.pre_accepted_items;
    }
    result.predictions += item.predictions;
    result.pre_accepted_boxes += item.pre_accepted;
    session.items.emplace(id, item);
    ++result.images;
  }
  bundle.save_session(session);
  result.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return result;
}

}  // namespace loopmark
