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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "loopmark/error.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace loopmark {
namespace {

using testing::RandomBox;

AugmentationSpec NoOpSpec() {
  AugmentationSpec spec;
  spec.flip_horizontal_probability = 0.0;
  spec.rotation_range_deg = {0.0, 0.0};
  spec.shear_range_deg_x = {0.0, 0.0};
  spec.shear_range_deg_y = {0.0, 0.0};
  return spec;
}

TEST(Iou, IdenticalAndDisjoint) {
  BoundingBox a{0, 0.3, 0.3, 0.2, 0.2};
  BoundingBox b{1, 0.8, 0.8, 0.2, 0.2};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, b), 0.0);
  // Touching edges share no area.
  EXPECT_DOUBLE_EQ(iou(a, BoundingBox{0, 0.5, 0.3, 0.2, 0.2}), 0.0);
}

TEST(Iou, ShiftedSquareAgainstRasterOracle) {
  BoundingBox a{0, 0.5, 0.5, 0.4, 0.4};
  BoundingBox b{0, 0.6, 0.5, 0.4, 0.4};
  const double raster = oracle::RasterIou(a, b, 1000);
  EXPECT_NEAR(raster, 0.6, 2e-3);
  EXPECT_NEAR(iou(a, b), raster, 2e-3);
  EXPECT_NEAR(iou(a, b), 0.6, 1e-12);
}

TEST(Iou, DegenerateBoxIsZero) {
  BoundingBox a{0, 0.5, 0.5, 0.0, 0.4};
  EXPECT_DOUBLE_EQ(iou(a, a), 0.0);
}

TEST(IouProperty, SymmetricBoundedAndContainment) {
  Rng rng(11, "geometry", "iou");
  for (int i = 0; i < 2000; ++i) {
    BoundingBox a = RandomBox(rng, 1);
    BoundingBox b = RandomBox(rng, 1);
    const double ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
    // Shrink a around its centre so it lies inside itself.
    BoundingBox inner{0, a.cx, a.cy, a.w * 0.5, a.h * 0.7};
    EXPECT_NEAR(iou(inner, a), (inner.w * inner.h) / (a.w * a.h), 1e-12);
  }
}

TEST(Affine, ComposeAndInvert) {
  const Point c{50, 40};
  Affine2 t = Affine2::horizontal_flip(100)
                  .then(Affine2::rotation_about(12.0, c))
                  .then(Affine2::shear_about(0.1, -0.05, c));
  Affine2 round = t.then(t.inverse());
  for (Point p : {Point{0, 0}, Point{17, 93}, Point{100, 80}}) {
    Point q = round.apply(p);
    EXPECT_NEAR(q.x, p.x, 1e-9);
    EXPECT_NEAR(q.y, p.y, 1e-9);
  }
  Affine2 singular{1, 2, 2, 4, 0, 0};
  EXPECT_FALSE(singular.invertible());
  EXPECT_THROW(singular.inverse(), InvalidArgument);
}

TEST(SampleAffine, CollapsedRangesGiveIdentity) {
  AugmentationSpec spec = NoOpSpec();
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(sample_affine(spec, {640, 480}, "img", k), Affine2::identity());
  }
}

TEST(SampleAffine, CertainFlipMirrorsX) {
  AugmentationSpec spec = NoOpSpec();
  spec.flip_horizontal_probability = 1.0;
  const Affine2 t = sample_affine(spec, {640, 480}, "img", 0);
  for (double x : {0.0, 10.5, 320.0, 640.0}) {
    Point p = t.apply({x, 33.0});
    EXPECT_DOUBLE_EQ(p.x, 640.0 - x);
    EXPECT_DOUBLE_EQ(p.y, 33.0);
  }
}

TEST(SampleAffine, DeterministicPerSeedImageAndCopy) {
  AugmentationSpec spec;
  spec.seed = 1234;
  const Affine2 first = sample_affine(spec, {320, 240}, "abc", 2);
  const Affine2 second = sample_affine(spec, {320, 240}, "abc", 2);
  EXPECT_EQ(first, second);
  EXPECT_NE(first, sample_affine(spec, {320, 240}, "abc", 3));
  EXPECT_NE(first, sample_affine(spec, {320, 240}, "abd", 2));
  spec.seed = 1235;
  EXPECT_NE(first, sample_affine(spec, {320, 240}, "abc", 2));
}

TEST(SampleAffine, DrawsStayInsideRanges) {
  AugmentationSpec spec;
  spec.seed = 8;
  int flips = 0;
  for (int k = 0; k < 400; ++k) {
    auto d = sample_augmentation(spec, {100, 100}, "x", k);
    EXPECT_GE(d.rotation_deg, -15.0);
    EXPECT_LE(d.rotation_deg, 15.0);
    EXPECT_GE(d.shear_x_deg, -10.0);
    EXPECT_LE(d.shear_x_deg, 10.0);
    EXPECT_GE(d.shear_y_deg, -10.0);
    EXPECT_LE(d.shear_y_deg, 10.0);
    flips += d.flipped ? 1 : 0;
  }
  EXPECT_GT(flips, 150);
  EXPECT_LT(flips, 250);
}

TEST(AugmentationSpec, Validation) {
  AugmentationSpec spec;
  EXPECT_NO_THROW(spec.validate());
  spec.copies_per_image = 0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = {};
  spec.rotation_range_deg = {-95, 0};
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = {};
  spec.min_area_keep_fraction = 0.0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = {};
  spec.flip_horizontal_probability = 1.5;
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(TransformBox, IdentityLeavesBoxUnchanged) {
  BoundingBox b{1, 0.3, 0.6, 0.2, 0.15};
  auto out = transform_box(b, Affine2::identity(), {640, 480});
  ASSERT_TRUE(out);
  EXPECT_EQ(out->class_id, 1);
  EXPECT_NEAR(out->cx, b.cx, 1e-12);
  EXPECT_NEAR(out->cy, b.cy, 1e-12);
  EXPECT_NEAR(out->w, b.w, 1e-12);
  EXPECT_NEAR(out->h, b.h, 1e-12);
  EXPECT_EQ(canonical(*out), canonical(b));
}

TEST(TransformBox, RotationAboutCentreKeepsCentredBoxCentred) {
  const ImageDims dims{640, 360};
  const Point c{320, 180};
  for (double deg : {-15.0, -7.5, 3.0, 15.0, 40.0}) {
    auto out = transform_box({0, 0.5, 0.5, 0.2, 0.3},
                             Affine2::rotation_about(deg, c), dims);
    ASSERT_TRUE(out);
    EXPECT_NEAR(out->cx, 0.5, 1e-12);
    EXPECT_NEAR(out->cy, 0.5, 1e-12);
  }
}

TEST(TransformBox, PlusFifteenDegreesOnSquareImage) {
  // Corner enumeration: the hull half-extents of a rotated w x h box are
  // (w/2)cos + (h/2)sin and (w/2)sin + (h/2)cos.
  const double rad = 15.0 * std::numbers::pi / 180.0;
  const double half_w = 0.1 * std::cos(rad) + 0.05 * std::sin(rad);
  const double half_h = 0.1 * std::sin(rad) + 0.05 * std::cos(rad);
  EXPECT_EQ(format_fixed6(2 * half_w), "0.219067");
  EXPECT_EQ(format_fixed6(2 * half_h), "0.148356");

  const ImageDims dims{1000, 1000};
  auto out = transform_box({0, 0.5, 0.5, 0.2, 0.1},
                           Affine2::rotation_about(15.0, {500, 500}), dims);
  ASSERT_TRUE(out);
  const BoundingBox c = canonical(*out);
  EXPECT_EQ(format_fixed6(c.cx), "0.500000");
  EXPECT_EQ(format_fixed6(c.cy), "0.500000");
  EXPECT_EQ(format_fixed6(c.w), "0.219067");
  EXPECT_EQ(format_fixed6(c.h), "0.148356");
}

TEST(TransformBox, DropsBoxesMostlyOutsideTheCanvas) {
  const ImageDims dims{100, 100};
  // Shift right by 57 px: 15% of the box remains.
  Affine2 shift{1, 0, 0, 1, 57, 0};
  EXPECT_FALSE(transform_box({0, 0.5, 0.5, 0.2, 0.2}, shift, dims));
  // Shift right by 35 px: 87.5% of a 40 px wide box remains.
  Affine2 small{1, 0, 0, 1, 35, 0};
  auto kept = transform_box({0, 0.5, 0.5, 0.4, 0.2}, small, dims);
  ASSERT_TRUE(kept);
  EXPECT_NEAR(kept->cx + kept->w / 2, 1.0, 1e-12);
  // Same case with a stricter keep fraction is dropped.
  EXPECT_FALSE(transform_box({0, 0.5, 0.5, 0.4, 0.2}, small, dims, 0.9));
  // Thinner than one pixel after clipping.
  EXPECT_FALSE(transform_box({0, 0.5, 0.5, 0.005, 0.2}, Affine2::identity(),
                             dims));
}

TEST(TransformBox, SingularTransformThrows) {
  EXPECT_THROW(transform_box({0, 0.5, 0.5, 0.1, 0.1}, Affine2{0, 0, 0, 0, 0, 0},
                             {10, 10}),
               InvalidArgument);
}

TEST(TransformBoxProperty, HullContainsTransformedInteriorPoints) {
  Rng rng(42, "geometry", "aabb");
  AugmentationSpec spec;
  spec.seed = 42;
  for (int i = 0; i < 1000; ++i) {
    const ImageDims dims{rng.uniform_int(32, 1920), rng.uniform_int(32, 1080)};
    const BoundingBox b = RandomBox(rng, 3);
    const Affine2 t = sample_affine(spec, dims, "aabb", i);
    const PixelRect src = to_pixels(b, dims);
    const PixelRect hull = transform_rect(src, t);
    for (int k = 0; k < 100; ++k) {
      Point p{rng.uniform(src.x0, src.x1), rng.uniform(src.y0, src.y1)};
      ASSERT_TRUE(hull.contains(t.apply(p), 1e-9)) << "pair " << i;
    }
  }
}

TEST(TransformBoxProperty, FlipIsAnInvolution) {
  Rng rng(3, "geometry", "flip");
  for (int i = 0; i < 500; ++i) {
    const ImageDims dims{rng.uniform_int(16, 2000), rng.uniform_int(16, 2000)};
    const BoundingBox b = RandomBox(rng, 2, 0.05, 0.5);
    const Affine2 flip = Affine2::horizontal_flip(dims.width_px);
    auto once = transform_box(b, flip, dims);
    ASSERT_TRUE(once);
    auto twice = transform_box(*once, flip, dims);
    ASSERT_TRUE(twice);
    EXPECT_NEAR(twice->cx, b.cx, 1e-9);
    EXPECT_NEAR(twice->cy, b.cy, 1e-9);
    EXPECT_NEAR(twice->w, b.w, 1e-9);
    EXPECT_NEAR(twice->h, b.h, 1e-9);
  }
}

TEST(TransformBoxProperty, RotateBackContainsOriginal) {
  Rng rng(4, "geometry", "rotate-back");
  for (int i = 0; i < 500; ++i) {
    const ImageDims dims{rng.uniform_int(64, 1024), rng.uniform_int(64, 1024)};
    const Point c{dims.width_px / 2.0, dims.height_px / 2.0};
    const double deg = rng.uniform(-15, 15);
    // Centred boxes small enough that neither rotation clips.
    BoundingBox b{0, rng.uniform(0.4, 0.6), rng.uniform(0.4, 0.6),
                  rng.uniform(0.02, 0.2), rng.uniform(0.02, 0.2)};
    auto there = transform_box(b, Affine2::rotation_about(deg, c), dims);
    ASSERT_TRUE(there);
    auto back = transform_box(*there, Affine2::rotation_about(-deg, c), dims);
    ASSERT_TRUE(back);
    const PixelRect outer = to_pixels(*back, dims);
    const PixelRect inner = to_pixels(b, dims);
    for (int k = 0; k < 100; ++k) {
      Point p{rng.uniform(inner.x0, inner.x1), rng.uniform(inner.y0, inner.y1)};
      ASSERT_TRUE(outer.contains(p, 1e-9));
    }
  }
}

Raster Checkerboard(int w, int h) {
  Raster r(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      r.set(x, y, {static_cast<std::uint8_t>(x * 7), static_cast<std::uint8_t>(y * 3),
                   static_cast<std::uint8_t>((x + y) % 2 ? 255 : 0)});
    }
  }
  return r;
}

TEST(ResampleRaster, IdentityIsByteIdentical) {
  Raster r = Checkerboard(37, 23);
  EXPECT_EQ(resample_raster(r, Affine2::identity()), r);
}

TEST(ResampleRaster, DoubleFlipIsByteIdentical) {
  Raster r = Checkerboard(40, 31);
  Affine2 flip = Affine2::horizontal_flip(40);
  Raster once = resample_raster(r, flip);
  EXPECT_NE(once, r);
  EXPECT_EQ(once.at(0, 5), r.at(39, 5));
  EXPECT_EQ(resample_raster(once, flip), r);
}

TEST(ResampleRaster, CentrePixelIsAFixedPointOfRotation) {
  Raster r(101, 101);
  r.set(50, 50, {255, 255, 255});
  Raster out = resample_raster(r, Affine2::rotation_about(15.0, {50.5, 50.5}));
  EXPECT_EQ(out.at(50, 50), (Rgb{255, 255, 255}));
}

TEST(ResampleRaster, OutOfBoundsIsBlack) {
  Raster r(10, 10, {200, 200, 200});
  Raster out = resample_raster(r, Affine2{1, 0, 0, 1, 5, 0});
  EXPECT_EQ(out.at(2, 2), (Rgb{0, 0, 0}));
  EXPECT_EQ(out.at(7, 2), (Rgb{200, 200, 200}));
}

TEST(Png, RoundTrip) {
  Raster r = Checkerboard(17, 9);
  EXPECT_EQ(decode_png(encode_png(r)), r);
  std::vector<std::uint8_t> junk{1, 2, 3, 4};
  EXPECT_THROW(decode_png(junk), UserError);
}

TEST(PlanAugmentation, RoundRobinWithBudget) {
  std::vector<std::string> ids{"a", "b", "c"};
  AugmentationSpec spec;
  spec.copies_per_image = 2;
  auto jobs = plan_augmentation(ids, spec);
  ASSERT_EQ(jobs.size(), 6u);
  EXPECT_EQ(jobs[3].image_id, "a");
  EXPECT_EQ(jobs[3].copy_index, 1);
  spec.augmented_budget = 4;
  jobs = plan_augmentation(ids, spec);
  ASSERT_EQ(jobs.size(), 4u);
  EXPECT_EQ(jobs.back().image_id, "a");
  EXPECT_EQ(jobs.back().copy_index, 1);
  spec.augmented_budget = 100;
  EXPECT_EQ(plan_augmentation(ids, spec).size(), 6u);
}

}  // namespace
}  // namespace loopmark
