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

// YOLO-style label files, prediction files and the classes.txt label map.
//
// Ground truth line:  `class cx cy w h`
// Prediction line:    `class cx cy w h conf`
//
// Coordinates are normalized to the image size. Serialization renders every
// real with exactly six decimals and terminates every line with '\n'; an
// empty file means "no objects".

#ifndef LOOPMARK_LABELFMT_HPP_
#define LOOPMARK_LABELFMT_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace loopmark {

/// Slack allowed when checking that a box lies inside the unit square.
inline constexpr double kEdgeEpsilon = 1e-6;

struct BoundingBox {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Prediction {
  BoundingBox box;
  double confidence = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

using LabelLine = std::variant<BoundingBox, Prediction>;

/// Ordered class-name table; the class id is the zero-based position.
class LabelMap {
 public:
  LabelMap() = default;
  /// Throws InvalidArgument on empty, duplicate or multi-line names.
  explicit LabelMap(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::string& name(int class_id) const;
  std::optional<int> id_of(std::string_view name) const;
  const std::vector<std::string>& names() const { return names_; }
  bool contains(int class_id) const {
    return class_id >= 0 && static_cast<std::size_t>(class_id) < names_.size();
  }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::vector<std::string> names_;
};

/// Throws InvalidArgument naming the violated invariant.
void validate_box(const BoundingBox& box);
void validate_prediction(const Prediction& pred);
bool is_valid_box(const BoundingBox& box);

/// Parses one line. `line_number` is only used in error messages.
LabelLine parse_label_line(std::string_view line, bool expect_confidence,
                           int line_number = 1);

std::vector<BoundingBox> parse_labels(std::string_view text);
std::vector<Prediction> parse_predictions(std::string_view text);

std::string serialize_labels(std::span<const BoundingBox> boxes);
std::string serialize_predictions(std::span<const Prediction> preds);

/// Rounds every field to what serialization would emit.
BoundingBox canonical(const BoundingBox& box);
Prediction canonical(const Prediction& pred);

/// Fixed six-decimal rendering used by every writer in the project.
std::string format_fixed6(double value);

LabelMap parse_label_map(std::string_view text);
std::string serialize_label_map(const LabelMap& map);

/// Every class id must be known to `map`; throws InvalidArgument otherwise.
void validate_against(std::span<const BoundingBox> boxes, const LabelMap& map);

std::vector<Prediction> with_confidence(std::span<const BoundingBox> boxes,
                                        double confidence);
std::vector<BoundingBox> strip_confidence(std::span<const Prediction> preds);

// File helpers. Readers wrap FormatError with the file path.
std::vector<BoundingBox> read_labels(const std::filesystem::path& path);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
LabelMap read_label_map(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path,
                  std::span<const BoundingBox> boxes);
void write_predictions(const std::filesystem::path& path,
                       std::span<const Prediction> preds);
void write_label_map(const std::filesystem::path& path, const LabelMap& map);

}  // namespace loopmark

#endif  // LOOPMARK_LABELFMT_HPP_
