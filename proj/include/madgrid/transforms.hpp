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

#pragma once

#include <array>
#include <string>
#include <vector>

#include "madgrid/common.hpp"
#include "madgrid/image.hpp"

namespace madgrid {

// Canonical category order. Caption word order and attribute pipelines both
// follow it, so keep the enum values contiguous from zero.
enum class AttrCategory : int {
  kThickness = 0,
  kSwelling = 1,
  kFracture = 2,
  kScaling = 3,
  kRotation = 4,
  kColor = 5,
};

constexpr int kCategoryCount = 6;
constexpr std::array<AttrCategory, kCategoryCount> kAllCategories = {
    AttrCategory::kThickness, AttrCategory::kSwelling, AttrCategory::kFracture,
    AttrCategory::kScaling,   AttrCategory::kRotation, AttrCategory::kColor,
};

struct CategoryDescriptor {
  std::string name;
  std::vector<std::string> values;
  int identity_index;  // -1 when the category has no identity value
};

// The fixed six-category catalog (3*2*2*2*3*7 = 504 combinations).
class AttributeCatalog {
 public:
  static const AttributeCatalog& instance();

  const CategoryDescriptor& category(AttrCategory c) const {
    return categories_[static_cast<int>(c)];
  }
  const std::vector<CategoryDescriptor>& categories() const { return categories_; }

  int value_count(AttrCategory c) const { return static_cast<int>(category(c).values.size()); }
  const std::string& value_name(AttrCategory c, int value_index) const;
  int value_index(AttrCategory c, const std::string& value_name) const;  // UnknownAttributeError
  AttrCategory category_by_name(const std::string& name) const;          // UnknownAttributeError
  long combination_count() const;

 private:
  AttributeCatalog();
  std::vector<CategoryDescriptor> categories_;
};

// Complete value map over the six categories, stored as value indices.
struct AttributeAssignment {
  std::array<uint8_t, kCategoryCount> value = {0, 0, 0, 0, 0, 0};

  int value_of(AttrCategory c) const { return value[static_cast<int>(c)]; }
  void set(AttrCategory c, int v) { value[static_cast<int>(c)] = static_cast<uint8_t>(v); }
  const std::string& value_name(AttrCategory c) const {
    return AttributeCatalog::instance().value_name(c, value_of(c));
  }
  bool operator==(const AttributeAssignment&) const = default;

  static AttributeAssignment all_identity();  // color set to gray
  static AttributeAssignment sample_uniform(Rng& rng);
};

// Knobs for the non-identity transforms. Defaults follow the morphological
// MNIST perturbation family this catalog is derived from.
struct TransformParams {
  double thicken_amount = 0.7;   // radius = amount * thickness / 2
  double thin_amount = 0.7;
  double swell_radius = 3.5;     // px at 28x28 scale
  double swell_exponent = 0.7;   // radial warp exponent
  int fracture_count = 3;        // up to this many gaps
  double fracture_width = 1.5;   // gap width in px
  double small_scale = 0.75;
  double rotation_deg = 36.0;

  bool operator==(const TransformParams&) const = default;
};

// Applies one named transform. Identity values return a pixel-identical
// copy. Color input must be grayscale and yields a 3-channel image; all
// other transforms are grayscale to grayscale.
Image apply_transform(const Image& img, AttrCategory category, int value_index, Rng& rng,
                      const TransformParams& params = {});
Image apply_transform(const Image& img, const std::string& category, const std::string& value,
                      Rng& rng, const TransformParams& params = {});

// Full pipeline in canonical category order; output is always RGB.
Image render_object(const Image& digit, const AttributeAssignment& a, Rng& rng,
                    const TransformParams& params = {});

// Exposed for tests.
Image rotate_about_center(const Image& img, double degrees_ccw);
const std::array<float, 3>& color_rgb(int color_value_index);

}  // namespace madgrid
