// Copyright 2026 The madgrid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "madgrid/transforms.hpp"

#include <cmath>

#include "doctest.h"
#include "madgrid/digits.hpp"
#include "madgrid/morphology.hpp"

using namespace madgrid;

namespace {

const std::string kDataDir = std::string(MADGRID_SOURCE_DIR) + "/data/mnist";

const DigitStore& train_store() {
  static DigitStore store = DigitStore::load(kDataDir, DigitSplit::kTrain);
  return store;
}

double binary_iou(const Image& a, const Image& b) {
  Mask ma = binarize(a), mb = binarize(b);
  int inter = 0, uni = 0;
  for (size_t i = 0; i < ma.on.size(); ++i) {
    inter += ma.on[i] && mb.on[i];
    uni += ma.on[i] || mb.on[i];
  }
  return uni == 0 ? 0.0 : double(inter) / uni;
}

}  // namespace

TEST_SUITE_BEGIN("transforms");

TEST_CASE("catalog matches the fixed six-category table") {
  const auto& cat = AttributeCatalog::instance();
  CHECK(cat.combination_count() == 504);
  CHECK(cat.category(AttrCategory::kThickness).values ==
        std::vector<std::string>{"no-thickthinning", "thickening", "thinning"});
  CHECK(cat.category(AttrCategory::kSwelling).values ==
        std::vector<std::string>{"no-swelling", "swelling"});
  CHECK(cat.category(AttrCategory::kFracture).values ==
        std::vector<std::string>{"no-fracture", "fracture"});
  CHECK(cat.category(AttrCategory::kScaling).values == std::vector<std::string>{"large", "small"});
  CHECK(cat.category(AttrCategory::kRotation).values ==
        std::vector<std::string>{"no-rotation", "rotate-p36", "rotate-n36"});
  CHECK(cat.category(AttrCategory::kColor).values ==
        std::vector<std::string>{"gray", "red", "green", "blue", "cyan", "magenta", "yellow"});
  CHECK(cat.category(AttrCategory::kScaling).identity_index == 0);
  CHECK(cat.category(AttrCategory::kColor).identity_index == -1);
  CHECK(cat.category_by_name("rotation") == AttrCategory::kRotation);
  CHECK_THROWS_AS(cat.category_by_name("sparkle"), UnknownAttributeError);
  CHECK_THROWS_AS(cat.value_index(AttrCategory::kColor, "chartreuse"), UnknownAttributeError);
}

TEST_CASE("identity values are pixel-identical") {
  Image digit = train_store().image(5, 0);
  Rng rng(1);
  for (AttrCategory c : kAllCategories) {
    int id = AttributeCatalog::instance().category(c).identity_index;
    if (id < 0) continue;
    Image out = apply_transform(digit, c, id, rng);
    CHECK(out.px == digit.px);
  }
}

TEST_CASE("empty input is rejected everywhere") {
  Image zero(28, 28, 1);
  Rng rng(1);
  for (AttrCategory c : kAllCategories)
    CHECK_THROWS_AS(apply_transform(zero, c, 1, rng), EmptyImageError);
}

TEST_CASE("thickening multiplies thickness by ~1.7") {
  Rng rng(2);
  int in_range = 0, n = 0;
  double ratio_sum = 0;
  for (int d = 0; d < 10; ++d)
    for (int i = 0; i < 3; ++i) {
      Image digit = train_store().image(d, i);
      double before = measure_thickness(digit);
      Image thick = apply_transform(digit, "thickness", "thickening", rng);
      double after = measure_thickness(thick);
      double ratio = after / before;
      ratio_sum += ratio;
      in_range += (ratio >= 1.45 && ratio <= 1.95);
      ++n;
    }
  // Per-digit ratios may stray for unusual strokes; the bulk and the mean
  // must stay inside the 1.7x +/- 15% band.
  CHECK(in_range >= n * 8 / 10);
  CHECK(ratio_sum / n >= 1.45);
  CHECK(ratio_sum / n <= 1.95);
}

TEST_CASE("thinning reduces thickness toward ~0.3x with a surviving stroke") {
  Rng rng(3);
  for (int d = 0; d < 10; ++d) {
    Image digit = train_store().image(d, 1);
    double before = measure_thickness(digit);
    Image thin = apply_transform(digit, "thickness", "thinning", rng);
    REQUIRE(!thin.empty_foreground());
    double after = measure_thickness(thin);
    CHECK(after / before >= 0.15);
    CHECK(after / before <= 0.75);
  }
}

TEST_CASE("rotation composed with its inverse recovers the digit") {
  Rng rng(4);
  for (int d : {0, 3, 7}) {
    Image digit = train_store().image(d, 2);
    Image rot = apply_transform(digit, "rotation", "rotate-p36", rng);
    Image back = rotate_about_center(rot, -36.0);
    CHECK(binary_iou(digit, back) >= 0.8);
  }
}

TEST_CASE("rotate-p36 and rotate-n36 spin opposite ways") {
  // A vertical bar offset to the right tells the two directions apart: its
  // top end moves left under a visual-CCW rotation.
  Image bar(28, 28, 1);
  for (int y = 6; y < 22; ++y) bar.at(20, y) = 1.0f;
  Rng rng(5);
  Image ccw = apply_transform(bar, "rotation", "rotate-p36", rng);
  Image cw = apply_transform(bar, "rotation", "rotate-n36", rng);
  auto mean_x_top = [](const Image& img) {
    double sx = 0, sw = 0;
    for (int y = 0; y < 14; ++y)
      for (int x = 0; x < 28; ++x) {
        sx += x * img.at(x, y);
        sw += img.at(x, y);
      }
    return sw > 0 ? sx / sw : 14.0;
  };
  CHECK(mean_x_top(ccw) < mean_x_top(bar));
  CHECK(mean_x_top(cw) > mean_x_top(bar));
}

TEST_CASE("small scaling fits the 21x21 centered box") {
  Rng rng(6);
  for (int d = 0; d < 10; ++d) {
    Image digit = train_store().image(d, 0);
    BBox orig = foreground_bbox(digit, 0.5f);
    Image small = apply_transform(digit, "scaling", "small", rng);
    BBox b = foreground_bbox(small, 0.5f);
    REQUIRE(!b.empty());
    // 21x21 centered in 28x28 covers pixels [3,24]; allow +/-1.
    CHECK(b.x0 >= 2);
    CHECK(b.y0 >= 2);
    CHECK(b.x1 <= 25);
    CHECK(b.y1 <= 25);
    CHECK(b.width() <= int(std::ceil(orig.width() * 0.75)) + 2);
    CHECK(b.height() <= int(std::ceil(orig.height() * 0.75)) + 2);
  }
}

TEST_CASE("swelling is a local edit around a stroke point") {
  Rng rng(7);
  Image digit = train_store().image(8, 0);
  Image swollen = apply_transform(digit, "swelling", "swelling", rng);
  REQUIRE(swollen.same_shape(digit));
  // Some pixels change, but most of the canvas is untouched.
  int changed = 0;
  for (size_t i = 0; i < digit.px.size(); ++i)
    changed += std::abs(digit.px[i] - swollen.px[i]) > 1e-3f;
  CHECK(changed > 0);
  CHECK(changed < int(digit.px.size()) / 4);
  // Foreground mass should not shrink: swelling inflates the stroke.
  double mass_before = 0, mass_after = 0;
  for (size_t i = 0; i < digit.px.size(); ++i) {
    mass_before += digit.px[i];
    mass_after += swollen.px[i];
  }
  CHECK(mass_after >= mass_before * 0.98);
}

TEST_CASE("fracture removes stroke pixels without touching background") {
  Rng rng(8);
  Image digit = train_store().image(0, 0);
  Image broken = apply_transform(digit, "fracture", "fracture", rng);
  REQUIRE(broken.same_shape(digit));
  int removed = 0;
  for (size_t i = 0; i < digit.px.size(); ++i) {
    CHECK(broken.px[i] <= digit.px[i] + 1e-6f);  // only darkens
    removed += digit.px[i] > 0.5f && broken.px[i] < 0.5f;
  }
  CHECK(removed >= 3);  // at least one visible gap
}

TEST_CASE("color multiplies channels and conserves the foreground set") {
  Rng rng(9);
  Image digit = train_store().image(2, 0);
  const auto& cat = AttributeCatalog::instance();
  for (int v = 0; v < cat.value_count(AttrCategory::kColor); ++v) {
    Image colored = apply_transform(digit, AttrCategory::kColor, v, rng);
    REQUIRE(colored.channels == 3);
    const auto& rgb = color_rgb(v);
    for (int y = 0; y < 28; ++y)
      for (int x = 0; x < 28; ++x) {
        float g = digit.at(x, y);
        for (int c = 0; c < 3; ++c)
          REQUIRE(colored.at(x, y, c) == doctest::Approx(g * rgb[c]));
        bool fg_in = g > 0.0f;
        bool fg_out = colored.at(x, y, 0) > 0 || colored.at(x, y, 1) > 0 || colored.at(x, y, 2) > 0;
        REQUIRE(fg_in == fg_out);
      }
  }
}

TEST_CASE("render_object applies the full pipeline deterministically") {
  Image digit = train_store().image(4, 3);
  AttributeAssignment a = AttributeAssignment::all_identity();
  a.set(AttrCategory::kScaling, 1);   // small
  a.set(AttrCategory::kRotation, 2);  // rotate-n36
  a.set(AttrCategory::kColor, 1);     // red
  Rng r1(42), r2(42);
  Image out1 = render_object(digit, a, r1);
  Image out2 = render_object(digit, a, r2);
  CHECK(out1.px == out2.px);
  REQUIRE(out1.channels == 3);

  // Red dominates; green/blue are dark.
  double sr = 0, sg = 0, sb = 0;
  for (int y = 0; y < 28; ++y)
    for (int x = 0; x < 28; ++x) {
      sr += out1.at(x, y, 0);
      sg += out1.at(x, y, 1);
      sb += out1.at(x, y, 2);
    }
  CHECK(sr > 10.0);
  CHECK(sg == doctest::Approx(0.0));
  CHECK(sb == doctest::Approx(0.0));

  // Small + rotation keeps the foreground within ~0.75x the original extent
  // (rotation of a roughly isotropic digit cannot exceed the diagonal bound).
  BBox orig = foreground_bbox(digit, 0.5f);
  BBox got = foreground_bbox(out1, 0.25f);
  double orig_diag = std::hypot(orig.width(), orig.height());
  double got_diag = std::hypot(got.width(), got.height());
  CHECK(got_diag <= 0.75 * orig_diag + 3.0);
}

TEST_CASE("identity pipeline tints gray at half intensity") {
  Image digit = train_store().image(6, 1);
  Rng rng(10);
  Image out = render_object(digit, AttributeAssignment::all_identity(), rng);
  REQUIRE(out.channels == 3);
  for (int y = 0; y < 28; ++y)
    for (int x = 0; x < 28; ++x)
      for (int c = 0; c < 3; ++c)
        REQUIRE(out.at(x, y, c) == doctest::Approx(digit.at(x, y) * 0.5f));
}

TEST_CASE("sample_uniform covers the catalog and respects the seed") {
  Rng r1(77), r2(77);
  bool same = true;
  std::array<std::array<int, 7>, kCategoryCount> counts{};
  for (int i = 0; i < 2000; ++i) {
    AttributeAssignment a = AttributeAssignment::sample_uniform(r1);
    AttributeAssignment b = AttributeAssignment::sample_uniform(r2);
    if (!(a == b)) same = false;
    for (AttrCategory c : kAllCategories) counts[int(c)][a.value_of(c)]++;
  }
  CHECK(same);
  const auto& cat = AttributeCatalog::instance();
  for (AttrCategory c : kAllCategories)
    for (int v = 0; v < cat.value_count(c); ++v)
      CHECK(counts[int(c)][v] > 2000 / cat.value_count(c) / 2);
}

TEST_SUITE_END();
