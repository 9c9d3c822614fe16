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

// Box geometry and the flip / rotate / shear augmentation.
//
// All transforms act in pixel space with continuous coordinates: pixel (i, j)
// covers [i, i+1) x [j, j+1) and the image center is (W/2, H/2). Labels are
// converted from normalized coordinates on entry and back on exit, so a 15
// degree rotation is 15 degrees on the raster regardless of aspect ratio.

#ifndef LOOPMARK_GEOMETRY_HPP_
#define LOOPMARK_GEOMETRY_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopmark/labelfmt.hpp"
#include "loopmark/raster.hpp"

namespace loopmark {

struct ImageDims {
  int width_px = 0;
  int height_px = 0;

  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned rectangle in pixel coordinates, x0 <= x1, y0 <= y1.
struct PixelRect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool contains(Point p, double tol = 0.0) const {
    return p.x >= x0 - tol && p.x <= x1 + tol && p.y >= y0 - tol &&
           p.y <= y1 + tol;
  }
};

/// (x, y) -> (a x + b y + tx, c x + d y + ty), pixel coordinates.
struct Affine2 {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  static Affine2 identity() { return {}; }
  /// x -> W - x.
  static Affine2 horizontal_flip(double width);
  /// Counter-clockwise in a y-up frame, i.e. clockwise as displayed.
  static Affine2 rotation_about(double degrees, Point center);
  /// x' = x + kx (y - cy), y' = y + ky (x - cx).
  static Affine2 shear_about(double kx, double ky, Point center);

  double determinant() const { return a * d - b * c; }
  bool invertible() const;
  Point apply(Point p) const {
    return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty};
  }
  /// Throws InvalidArgument when singular.
  Affine2 inverse() const;
  /// `next` applied after `*this`.
  Affine2 then(const Affine2& next) const;

  friend bool operator==(const Affine2&, const Affine2&) = default;
};

struct DegreeRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentationSpec {
  double flip_horizontal_probability = 0.5;
  DegreeRange rotation_range_deg{-15.0, 15.0};
  DegreeRange shear_range_deg_x{-10.0, 10.0};
  DegreeRange shear_range_deg_y{-10.0, 10.0};
  std::uint64_t seed = 0;
  int copies_per_image = 1;
  double min_area_keep_fraction = 0.25;
  /// Upper bound on augmented images per split. Copies are issued
  /// round-robin (copy 0 of every image, then copy 1, ...) until the
  /// budget or copies_per_image is exhausted.
  std::optional<int> augmented_budget;

  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const;
};

/// The parameters drawn for one augmented copy.
struct AugmentationDraw {
  bool flipped = false;
  double rotation_deg = 0.0;
  double shear_x_deg = 0.0;
  double shear_y_deg = 0.0;
  Affine2 transform;
};

struct AugmentationJob {
  std::string image_id;
  int copy_index = 0;
};

/// Area of intersection over area of union, ignoring class ids. Zero when
/// either box has no area.
double iou(const BoundingBox& a, const BoundingBox& b);

PixelRect to_pixels(const BoundingBox& box, ImageDims dims);
BoundingBox from_pixels(const PixelRect& rect, ImageDims dims, int class_id);

/// Axis-aligned hull of the four transformed corners.
PixelRect transform_rect(const PixelRect& rect, const Affine2& t);

/// Flip, then rotation about the image center, then shear about the image
/// center. Pure function of (spec.seed, image_id, copy_index).
AugmentationDraw sample_augmentation(const AugmentationSpec& spec,
                                     ImageDims dims, std::string_view image_id,
                                     int copy_index);
Affine2 sample_affine(const AugmentationSpec& spec, ImageDims dims,
                      std::string_view image_id, int copy_index);

/// Maps a label through `t`. Returns nullopt when the clipped box keeps less
/// than `min_area_keep_fraction` of its transformed area or is thinner than
/// one pixel. Throws InvalidArgument for a singular transform.
std::optional<BoundingBox> transform_box(const BoundingBox& box,
                                         const Affine2& t, ImageDims dims,
                                         double min_area_keep_fraction = 0.25);

std::vector<BoundingBox> transform_boxes(std::span<const BoundingBox> boxes,
                                         const Affine2& t, ImageDims dims,
                                         double min_area_keep_fraction);

/// Nearest-neighbour inverse mapping; sources outside the input are black.
Raster resample_raster(const Raster& image, const Affine2& t);

/// Which (image, copy) pairs an augmentation pass produces, in order.
/// `image_ids` are processed in the given order within each copy round.
std::vector<AugmentationJob> plan_augmentation(
    std::span<const std::string> image_ids, const AugmentationSpec& spec);

}  // namespace loopmark

#endif  // LOOPMARK_GEOMETRY_HPP_
