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

#include "loopmark/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "loopmark/error.hpp"
#include "loopmark/rng.hpp"

namespace loopmark {
namespace {

constexpr double kSingularDeterminant = 1e-12;

double Radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

void CheckRange(const DegreeRange& r, const char* name) {
  if (!(r.lo <= r.hi)) {
    throw InvalidArgument(std::string(name) + ": lo must not exceed hi");
  }
  if (!(r.lo > -90.0 && r.hi < 90.0)) {
    throw InvalidArgument(std::string(name) + " must lie within (-90, 90)");
  }
}

}  // namespace

Affine2 Affine2::horizontal_flip(double width) {
  return {-1.0, 0.0, 0.0, 1.0, width, 0.0};
}

Affine2 Affine2::rotation_about(double degrees, Point center) {
  const double rad = Radians(degrees);
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  // p' = center + R (p - center)
  return {cs,
          -sn,
          sn,
          cs,
          center.x - cs * center.x + sn * center.y,
          center.y - sn * center.x - cs * center.y};
}

Affine2 Affine2::shear_about(double kx, double ky, Point center) {
  return {1.0, kx, ky, 1.0, -kx * center.y, -ky * center.x};
}

bool Affine2::invertible() const {
  const double det = determinant();
  return std::isfinite(det) && std::abs(det) > kSingularDeterminant;
}

Affine2 Affine2::inverse() const {
  if (!invertible()) throw InvalidArgument("singular affine transform");
  const double det = determinant();
  Affine2 inv;
  inv.a = d / det;
  inv.b = -b / det;
  inv.c = -c / det;
  inv.d = a / det;
  inv.tx = -(inv.a * tx + inv.b * ty);
  inv.ty = -(inv.c * tx + inv.d * ty);
  return inv;
}

Affine2 Affine2::then(const Affine2& n) const {
  return {n.a * a + n.b * c,
          n.a * b + n.b * d,
          n.c * a + n.d * c,
          n.c * b + n.d * d,
          n.a * tx + n.b * ty + n.tx,
          n.c * tx + n.d * ty + n.ty};
}

void AugmentationSpec::validate() const {
  if (!(flip_horizontal_probability >= 0.0 &&
        flip_horizontal_probability <= 1.0)) {
    throw InvalidArgument("flip probability must be in [0,1]");
  }
  CheckRange(rotation_range_deg, "rotation range");
  CheckRange(shear_range_deg_x, "x shear range");
  CheckRange(shear_range_deg_y, "y shear range");
  if (copies_per_image < 1) {
    throw InvalidArgument("copies_per_image must be at least 1");
  }
  if (!(min_area_keep_fraction > 0.0 && min_area_keep_fraction <= 1.0)) {
    throw InvalidArgument("min_area_keep_fraction must be in (0,1]");
  }
  if (augmented_budget && *augmented_budget < 0) {
    throw InvalidArgument("augmented_budget must be non-negative");
  }
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

PixelRect to_pixels(const BoundingBox& box, ImageDims dims) {
  const double W = dims.width_px, H = dims.height_px;
  return {(box.cx - box.w / 2) * W, (box.cy - box.h / 2) * H,
          (box.cx + box.w / 2) * W, (box.cy + box.h / 2) * H};
}

BoundingBox from_pixels(const PixelRect& r, ImageDims dims, int class_id) {
  const double W = dims.width_px, H = dims.height_px;
  return {class_id, (r.x0 + r.x1) / (2 * W), (r.y0 + r.y1) / (2 * H),
          (r.x1 - r.x0) / W, (r.y1 - r.y0) / H};
}

PixelRect transform_rect(const PixelRect& r, const Affine2& t) {
  const Point corners[4] = {t.apply({r.x0, r.y0}), t.apply({r.x1, r.y0}),
                            t.apply({r.x1, r.y1}), t.apply({r.x0, r.y1})};
  PixelRect out{corners[0].x, corners[0].y, corners[0].x, corners[0].y};
  for (const auto& p : corners) {
    out.x0 = std::min(out.x0, p.x);
    out.y0 = std::min(out.y0, p.y);
    out.x1 = std::max(out.x1, p.x);
    out.y1 = std::max(out.y1, p.y);
  }
  return out;
}

AugmentationDraw sample_augmentation(const AugmentationSpec& spec,
                                     ImageDims dims, std::string_view image_id,
                                     int copy_index) {
  Rng rng(spec.seed, "augment", image_id,
          static_cast<std::uint64_t>(copy_index));
  // Fixed draw order: every copy consumes exactly four uniforms.
  const double u_flip = rng.uniform();
  const double u_rot = rng.uniform();
  const double u_shx = rng.uniform();
  const double u_shy = rng.uniform();

  AugmentationDraw draw;
  draw.flipped = u_flip < spec.flip_horizontal_probability;
  auto lerp = [](const DegreeRange& r, double u) {
    return r.lo == r.hi ? r.lo : r.lo + (r.hi - r.lo) * u;
  };
  draw.rotation_deg = lerp(spec.rotation_range_deg, u_rot);
  draw.shear_x_deg = lerp(spec.shear_range_deg_x, u_shx);
  draw.shear_y_deg = lerp(spec.shear_range_deg_y, u_shy);

  const Point center{dims.width_px / 2.0, dims.height_px / 2.0};
  Affine2 t = Affine2::identity();
  if (draw.flipped) t = t.then(Affine2::horizontal_flip(dims.width_px));
  if (draw.rotation_deg != 0.0) {
    t = t.then(Affine2::rotation_about(draw.rotation_deg, center));
  }
  if (draw.shear_x_deg != 0.0 || draw.shear_y_deg != 0.0) {
    t = t.then(Affine2::shear_about(std::tan(Radians(draw.shear_x_deg)),
                                    std::tan(Radians(draw.shear_y_deg)),
                                    center));
  }
  draw.transform = t;
  return draw;
}

Affine2 sample_affine(const AugmentationSpec& spec, ImageDims dims,
                      std::string_view image_id, int copy_index) {
  return sample_augmentation(spec, dims, image_id, copy_index).transform;
}

std::optional<BoundingBox> transform_box(const BoundingBox& box,
                                         const Affine2& t, ImageDims dims,
                                         double min_area_keep_fraction) {
  if (!t.invertible()) throw InvalidArgument("singular affine transform");
  const PixelRect hull = transform_rect(to_pixels(box, dims), t);
  PixelRect clipped{std::clamp(hull.x0, 0.0, double(dims.width_px)),
                    std::clamp(hull.y0, 0.0, double(dims.height_px)),
                    std::clamp(hull.x1, 0.0, double(dims.width_px)),
                    std::clamp(hull.y1, 0.0, double(dims.height_px))};
  if (clipped.width() < 1.0 || clipped.height() < 1.0) return std::nullopt;
  if (clipped.area() < min_area_keep_fraction * hull.area()) {
    return std::nullopt;
  }
  BoundingBox out = from_pixels(clipped, dims, box.class_id);
  // Clamp rounding residue so the result always validates.
  out.w = std::min(out.w, 1.0);
  out.h = std::min(out.h, 1.0);
  out.cx = std::clamp(out.cx, 0.0, 1.0);
  out.cy = std::clamp(out.cy, 0.0, 1.0);
  return out;
}

std::vector<BoundingBox> transform_boxes(std::span<const BoundingBox> boxes,
                                         const Affine2& t, ImageDims dims,
                                         double min_area_keep_fraction) {
  std::vector<BoundingBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) {
    if (auto mapped = transform_box(b, t, dims, min_area_keep_fraction)) {
      out.push_back(*mapped);
    }
  }
  return out;
}

Raster resample_raster(const Raster& image, const Affine2& t) {
  const Affine2 inv = t.inverse();
  Raster out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Point src = inv.apply({x + 0.5, y + 0.5});
      const double fx = std::floor(src.x);
      const double fy = std::floor(src.y);
      if (fx < 0.0 || fy < 0.0 || fx >= image.width || fy >= image.height) {
        continue;
      }
      out.set(x, y, image.at(static_cast<int>(fx), static_cast<int>(fy)));
    }
  }
  return out;
}

std::vector<AugmentationJob> plan_augmentation(
    std::span<const std::string> image_ids, const AugmentationSpec& spec) {
  spec.validate();
  const std::size_t budget =
      spec.augmented_budget ? static_cast<std::size_t>(*spec.augmented_budget)
                            : image_ids.size() *
                                  static_cast<std::size_t>(spec.copies_per_image);
  std::vector<AugmentationJob> jobs;
  for (int k = 0; k < spec.copies_per_image && jobs.size() < budget; ++k) {
    for (const auto& id : image_ids) {
      if (jobs.size() >= budget) break;
      jobs.push_back({id, k});
    }
  }
  return jobs;
}

}  // namespace loopmark
