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

#include "loopmark/labelfmt.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <set>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"

namespace loopmark {
namespace {

constexpr const char* kFieldNames[] = {"class_id", "cx", "cy", "w", "h",
                                       "confidence"};

bool IsSpace(char c) { return c == ' ' || c == '\t' || c == '\r'; }

// Splits on runs of blanks. Returns at most 7 tokens so callers can report
// "too many fields" without scanning the rest.
std::vector<std::string_view> Tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size() && out.size() < 7) {
    while (i < line.size() && IsSpace(line[i])) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !IsSpace(line[j])) ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double ParseReal(std::string_view tok, int line, int field) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() ||
      !std::isfinite(value)) {
    throw FormatError("not a number for " + std::string(kFieldNames[field - 1]) +
                          ": '" + std::string(tok) + "'",
                      line, field);
  }
  return value;
}

int ParseClassId(std::string_view tok, int line) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError("class id is not an integer: '" + std::string(tok) + "'",
                      line, 1);
  }
  if (value < 0) throw FormatError("negative class id", line, 1);
  return value;
}

// Index (1-based field) of the first violated invariant, 0 if valid.
int FirstInvalidField(const BoundingBox& b) {
  if (b.class_id < 0) return 1;
  if (!(b.cx >= 0.0 && b.cx <= 1.0)) return 2;
  if (!(b.cy >= 0.0 && b.cy <= 1.0)) return 3;
  if (!(b.w > 0.0 && b.w <= 1.0)) return 4;
  if (!(b.h > 0.0 && b.h <= 1.0)) return 5;
  if (b.cx - b.w / 2 < -kEdgeEpsilon || b.cx + b.w / 2 > 1.0 + kEdgeEpsilon) {
    return 4;
  }
  if (b.cy - b.h / 2 < -kEdgeEpsilon || b.cy + b.h / 2 > 1.0 + kEdgeEpsilon) {
    return 5;
  }
  return 0;
}

std::string FieldMessage(int field) {
  switch (field) {
    case 1: return "class id must be non-negative";
    case 2: return "cx out of range [0,1]";
    case 3: return "cy out of range [0,1]";
    case 4: return "width out of range or box exceeds image horizontally";
    case 5: return "height out of range or box exceeds image vertically";
    default: return "confidence out of range [0,1]";
  }
}

template <typename Fn>
void ForEachLine(std::string_view text, Fn&& fn) {
  int line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    fn(text.substr(start, end - start), ++line_no);
    start = end + 1;
  }
}

template <typename T, typename Fn>
T WithPath(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

LabelMap::LabelMap(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw InvalidArgument("empty label map");
  std::set<std::string_view> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InvalidArgument("empty class name");
    if (n.find_first_of("\r\n") != std::string::npos) {
      throw InvalidArgument("class name contains a line break");
    }
    if (!seen.insert(n).second) {
      throw InvalidArgument("duplicate class name '" + n + "'");
    }
  }
}

const std::string& LabelMap::name(int class_id) const {
  if (!contains(class_id)) {
    throw InvalidArgument("unknown class id " + std::to_string(class_id));
  }
  return names_[static_cast<std::size_t>(class_id)];
}

std::optional<int> LabelMap::id_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

bool is_valid_box(const BoundingBox& box) {
  return FirstInvalidField(box) == 0;
}

void validate_box(const BoundingBox& box) {
  if (int f = FirstInvalidField(box)) throw InvalidArgument(FieldMessage(f));
}

void validate_prediction(const Prediction& pred) {
  validate_box(pred.box);
  if (!(pred.confidence >= 0.0 && pred.confidence <= 1.0)) {
    throw InvalidArgument(FieldMessage(6));
  }
}

LabelLine parse_label_line(std::string_view line, bool expect_confidence,
                           int line_number) {
  const auto tokens = Tokenize(line);
  const std::size_t want = expect_confidence ? 6 : 5;
  if (tokens.size() != want) {
    throw FormatError("expected " + std::to_string(want) + " fields, got " +
                          (tokens.size() > 6 ? std::string("more than 6")
                                             : std::to_string(tokens.size())),
                      line_number);
  }
  BoundingBox box;
  box.class_id = ParseClassId(tokens[0], line_number);
  box.cx = ParseReal(tokens[1], line_number, 2);
  box.cy = ParseReal(tokens[2], line_number, 3);
  box.w = ParseReal(tokens[3], line_number, 4);
  box.h = ParseReal(tokens[4], line_number, 5);
  if (int f = FirstInvalidField(box)) {
    throw FormatError(FieldMessage(f), line_number, f);
  }
  if (!expect_confidence) return box;
  double conf = ParseReal(tokens[5], line_number, 6);
  if (!(conf >= 0.0 && conf <= 1.0)) {
    throw FormatError(FieldMessage(6), line_number, 6);
  }
  return Prediction{box, conf};
}

std::vector<BoundingBox> parse_labels(std::string_view text) {
  std::vector<BoundingBox> out;
  ForEachLine(text, [&](std::string_view line, int no) {
    out.push_back(std::get<BoundingBox>(parse_label_line(line, false, no)));
  });
  return out;
}

std::vector<Prediction> parse_predictions(std::string_view text) {
  std::vector<Prediction> out;
  ForEachLine(text, [&](std::string_view line, int no) {
    out.push_back(std::get<Prediction>(parse_label_line(line, true, no)));
  });
  return out;
}

std::string format_fixed6(double value) {
  std::array<char, 64> buf{};
  // Adding 0.0 folds -0.0 into +0.0 so the output never carries a sign.
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(),
                                 value + 0.0, std::chars_format::fixed, 6);
  if (ec != std::errc()) throw InvalidArgument("cannot format value");
  std::string out(buf.data(), ptr);
  if (out == "-0.000000") out = "0.000000";
  return out;
}

namespace {

void AppendBox(std::string& out, const BoundingBox& b) {
  out += std::to_string(b.class_id);
  for (double v : {b.cx, b.cy, b.w, b.h}) {
    out.push_back(' ');
    out += format_fixed6(v);
  }
}

}  // namespace

std::string serialize_labels(std::span<const BoundingBox> boxes) {
  std::string out;
  out.reserve(boxes.size() * 40);
  for (const auto& b : boxes) {
    validate_box(b);
    AppendBox(out, b);
    out.push_back('\n');
  }
  return out;
}

std::string serialize_predictions(std::span<const Prediction> preds) {
  std::string out;
  out.reserve(preds.size() * 48);
  for (const auto& p : preds) {
    validate_prediction(p);
    AppendBox(out, p.box);
    out.push_back(' ');
    out += format_fixed6(p.confidence);
    out.push_back('\n');
  }
  return out;
}

BoundingBox canonical(const BoundingBox& box) {
  std::array<BoundingBox, 1> one{box};
  return parse_labels(serialize_labels(one)).front();
}

Prediction canonical(const Prediction& pred) {
  std::array<Prediction, 1> one{pred};
  return parse_predictions(serialize_predictions(one)).front();
}

LabelMap parse_label_map(std::string_view text) {
  if (text.empty()) throw FormatError("empty label map");
  std::vector<std::string> names;
  std::set<std::string> seen;
  ForEachLine(text, [&](std::string_view line, int no) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) throw FormatError("empty class name", no);
    std::string name(line);
    if (!seen.insert(name).second) {
      throw FormatError("duplicate class name '" + name + "'", no);
    }
    names.push_back(std::move(name));
  });
  return LabelMap(std::move(names));
}

std::string serialize_label_map(const LabelMap& map) {
  std::string out;
  for (const auto& n : map.names()) {
    out += n;
    out.push_back('\n');
  }
  return out;
}

void validate_against(std::span<const BoundingBox> boxes, const LabelMap& map) {
  for (const auto& b : boxes) {
    validate_box(b);
    if (!map.contains(b.class_id)) {
      throw InvalidArgument("class id " + std::to_string(b.class_id) +
                            " not in label map of " +
                            std::to_string(map.size()) + " classes");
    }
  }
}

std::vector<Prediction> with_confidence(std::span<const BoundingBox> boxes,
                                        double confidence) {
  std::vector<Prediction> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back({b, confidence});
  return out;
}

std::vector<BoundingBox> strip_confidence(std::span<const Prediction> preds) {
  std::vector<BoundingBox> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.box);
  return out;
}

std::vector<BoundingBox> read_labels(const std::filesystem::path& path) {
  return WithPath<std::vector<BoundingBox>>(
      path, [&] { return parse_labels(read_file(path)); });
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  return WithPath<std::vector<Prediction>>(
      path, [&] { return parse_predictions(read_file(path)); });
}

LabelMap read_label_map(const std::filesystem::path& path) {
  return WithPath<LabelMap>(path,
                            [&] { return parse_label_map(read_file(path)); });
}

void write_labels(const std::filesystem::path& path,
                  std::span<const BoundingBox> boxes) {
  write_file_atomic(path, serialize_labels(boxes));
}

void write_predictions(const std::filesystem::path& path,
                       std::span<const Prediction> preds) {
  write_file_atomic(path, serialize_predictions(preds));
}

void write_label_map(const std::filesystem::path& path, const LabelMap& map) {
  write_file_atomic(path, serialize_label_map(map));
}

}  // namespace loopmark
