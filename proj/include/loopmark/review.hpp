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


// Review bundles and sessions.
//
//   review/iter_<i>/images/<id>.png
//   review/iter_<i>/labels/<id>.txt        predictions without confidences,
//                                          editable in any YOLO labeling tool
//   review/iter_<i>/confidences/<id>.txt   one confidence per label line
//   review/iter_<i>/classes.txt
//   review/iter_<i>/session.json
//   review/iter_<i>/staging/<id>.txt       corrections received so far

#ifndef LOOPMARK_REVIEW_HPP_
#define LOOPMARK_REVIEW_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopmark/labelfmt.hpp"
#include "loopmark/workspace.hpp"

namespace loopmark {

enum class ItemStatus { kPending, kEdited, kAccepted };

std::string_view to_string(ItemStatus s);
ItemStatus item_status_from_string(std::string_view s);

struct ReviewItem {
  ItemStatus status = ItemStatus::kPending;
  int predictions = 0;
  int pre_accepted = 0;  // boxes at or above the auto-accept confidence

  friend bool operator==(const ReviewItem&, const ReviewItem&) = default;
};

struct ReviewSession {
  int iteration = 0;
  std::map<std::string, ReviewItem> items;
  std::optional<double> auto_accept_confidence;
  std::string started_at;
  std::string updated_at;
  bool finalized = false;

  std::vector<std::string> pending() const;
  friend bool operator==(const ReviewSession&, const ReviewSession&) = default;
};

std::string session_to_json(const ReviewSession& s);
ReviewSession session_from_json(std::string_view text);

/// Per-box pre-accept marks: confidence >= threshold.
std::vector<bool> pre_accept_flags(std::span<const Prediction> preds,
                                   std::optional<double> threshold);

/// An item is pre-accepted when it has predictions and all of them are
/// pre-accepted. Items without predictions always need a human look.
bool item_pre_accepted(std::span<const Prediction> preds,
                       std::optional<double> threshold);

class ReviewBundle {
 public:
  ReviewBundle(std::filesystem::path workspace_root, int iteration);

  int iteration() const { return iteration_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path image_path(const std::string& id) const;
  std::filesystem::path labels_path(const std::string& id) const;
  std::filesystem::path confidences_path(const std::string& id) const;
  std::filesystem::path staging_path(const std::string& id) const;
  std::filesystem::path session_path() const;

  bool exists() const;
  ReviewSession load_session() const;
  void save_session(const ReviewSession& s) const;

  /// Exported labels re-joined with their confidence sidecar.
  std::vector<Prediction> predictions(const std::string& id) const;

  /// Stores a full-replacement correction for one image.
  void stage_correction(const std::string& id,
                        std::span<const BoundingBox> boxes) const;
  std::optional<std::vector<BoundingBox>> staged_correction(
      const std::string& id) const;

  /// Labels that finalizing would merge: the staged correction when one
  /// exists, otherwise the (possibly hand-edited) exported label file.
  std::vector<BoundingBox> final_labels(const std::string& id) const;

 private:
  std::filesystem::path root_;
  int iteration_;
  std::filesystem::path dir_;
};

struct ExportResult {
  int images = 0;
  int predictions = 0;
  int pre_accepted_boxes = 0;
  int pre_accepted_items = 0;
  double seconds = 0.0;
};

/// Writes the review bundle for `ids` from `predictions_dir` and opens a
/// fresh session. Any previous bundle for the iteration is replaced.
ExportResult export_review_bundle(const Workspace& ws, int iteration,
                                  std::span<const std::string> ids,
                                  const std::filesystem::path& predictions_dir,
                                  std::optional<double> auto_accept_confidence,
                                  const std::string& now);

}  // namespace loopmark

#endif  // LOOPMARK_REVIEW_HPP_
