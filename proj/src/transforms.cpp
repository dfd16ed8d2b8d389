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

#include "madgrid/morphology.hpp"

namespace madgrid {

AttributeCatalog::AttributeCatalog() {
  categories_ = {
      {"thickness", {"no-thickthinning", "thickening", "thinning"}, 0},
      {"swelling", {"no-swelling", "swelling"}, 0},
      {"fracture", {"no-fracture", "fracture"}, 0},
      {"scaling", {"large", "small"}, 0},
      {"rotation", {"no-rotation", "rotate-p36", "rotate-n36"}, 0},
      {"color", {"gray", "red", "green", "blue", "cyan", "magenta", "yellow"}, -1},
  };
}

const AttributeCatalog& AttributeCatalog::instance() {
  static AttributeCatalog catalog;
  return catalog;
}

const std::string& AttributeCatalog::value_name(AttrCategory c, int value_index) const {
  const auto& cat = category(c);
  if (value_index < 0 || value_index >= static_cast<int>(cat.values.size()))
    throw UnknownAttributeError("bad value index for " + cat.name);
  return cat.values[value_index];
}

int AttributeCatalog::value_index(AttrCategory c, const std::string& value_name) const {
  const auto& cat = category(c);
  for (size_t i = 0; i < cat.values.size(); ++i)
    if (cat.values[i] == value_name) return static_cast<int>(i);
  throw UnknownAttributeError("unknown value '" + value_name + "' for category " + cat.name);
}

AttrCategory AttributeCatalog::category_by_name(const std::string& name) const {
  for (int i = 0; i < kCategoryCount; ++i)
    if (categories_[i].name == name) return static_cast<AttrCategory>(i);
  throw UnknownAttributeError("unknown category '" + name + "'");
}

long AttributeCatalog::combination_count() const {
  long n = 1;
  for (const auto& c : categories_) n *= static_cast<long>(c.values.size());
  return n;
}

AttributeAssignment AttributeAssignment::all_identity() {
  AttributeAssignment a;
  for (AttrCategory c : kAllCategories) {
    int id = AttributeCatalog::instance().category(c).identity_index;
    a.set(c, id >= 0 ? id : 0);  // color has no identity; gray stands in
  }
  return a;
}

AttributeAssignment AttributeAssignment::sample_uniform(Rng& rng) {
  AttributeAssignment a;
  for (AttrCategory c : kAllCategories)
    a.set(c, static_cast<int>(rng.uniform_u32(AttributeCatalog::instance().value_count(c))));
  return a;
}

namespace {

constexpr int kScale = 4;  // morphology runs at 4x upsampling

void require_gray(const Image& img, const char* op) {
  if (img.channels != 1) throw ShapeMismatchError(std::string(op) + ": expected grayscale input");
}

void require_nonempty(const Image& img, const char* op) {
  if (img.empty_foreground()) throw EmptyImageError(std::string(op) + ": empty image");
}

// Grows (radius > 0) or shrinks (radius < 0) the stroke by moving the
// 0.5-level contour along the signed distance field, computed at 4x.
Image offset_stroke(const Image& img, double radius_px) {
  Image up = upsample(img, kScale);
  Mask fg = binarize(up, 0.5f);
  Mask bg(fg.width, fg.height);
  for (size_t i = 0; i < fg.on.size(); ++i) bg.on[i] = fg.on[i] ? 0 : 1;

  auto dist_in = distance_to_complement(fg);   // >0 inside the stroke
  auto dist_out = distance_to_complement(bg);  // >0 outside the stroke

  double rho = radius_px * kScale;
  if (rho < 0) {
    // Keep at least a thin core alive when eroding.
    float deepest = 0.0f;
    for (float d : dist_in) deepest = std::max(deepest, d);
    rho = std::max(rho, -static_cast<double>(deepest) + 2.0);
  }

  Image shifted(up.width, up.height, 1);
  for (size_t i = 0; i < shifted.px.size(); ++i) {
    double signed_dist = fg.on[i] ? -static_cast<double>(dist_in[i]) : static_cast<double>(dist_out[i]);
    shifted.px[i] = static_cast<float>(std::clamp(rho - signed_dist + 0.5, 0.0, 1.0));
  }
  return downsample(shifted, kScale);
}

Image warp_swell(const Image& img, Rng& rng, const TransformParams& p) {
  auto pts = skeleton_points(img);
  if (pts.empty()) throw EmptyImageError("swelling: no stroke to swell");
  auto [cx, cy] = pts[rng.uniform_u32(static_cast<uint32_t>(pts.size()))];

  const double R = p.swell_radius;
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double dx = x - cx, dy = y - cy;
      double d = std::sqrt(dx * dx + dy * dy);
      if (d >= R || d == 0.0) {
        out.at(x, y) = img.at(x, y);
      } else {
        double f = std::pow(d / R, p.swell_exponent);
        out.at(x, y) = sample_bilinear(img, cx + dx * f, cy + dy * f);
      }
    }
  return out;
}

Image cut_fractures(const Image& img, Rng& rng, const TransformParams& p) {
  auto pts = skeleton_points(img);
  if (pts.empty()) throw EmptyImageError("fracture: no stroke to cut");
  double thickness = measure_thickness(img);
  double half_len = thickness / 2.0 + 2.0;  // span the full stroke cross-section
  double half_w = p.fracture_width / 2.0;

  Image out = img;
  std::vector<std::pair<int, int>> chosen;
  for (int k = 0; k < p.fracture_count; ++k) {
    // Sample a skeleton point away from previous cuts.
    std::pair<int, int> pt{-1, -1};
    for (int attempt = 0; attempt < 20; ++attempt) {
      auto cand = pts[rng.uniform_u32(static_cast<uint32_t>(pts.size()))];
      bool far = true;
      for (auto& c : chosen) {
        double ddx = cand.first - c.first, ddy = cand.second - c.second;
        if (ddx * ddx + ddy * ddy < 16.0) far = false;
      }
      if (far) {
        pt = cand;
        break;
      }
    }
    if (pt.first < 0) break;
    chosen.push_back(pt);

    // Local stroke direction from the skeleton neighborhood (PCA axis).
    double sxx = 0, sxy = 0, syy = 0, n = 0;
    for (auto& q : pts) {
      double ddx = q.first - pt.first, ddy = q.second - pt.second;
      if (ddx * ddx + ddy * ddy <= 9.0) {
        sxx += ddx * ddx;
        sxy += ddx * ddy;
        syy += ddy * ddy;
        n += 1;
      }
    }
    double dirx = 1.0, diry = 0.0;
    if (n > 1) {
      double tr = sxx + syy;
      double det = sxx * syy - sxy * sxy;
      double lambda = tr / 2 + std::sqrt(std::max(0.0, tr * tr / 4 - det));
      if (std::abs(sxy) > 1e-9) {
        dirx = lambda - syy;
        diry = sxy;
      } else if (sxx < syy) {
        dirx = 0.0;
        diry = 1.0;
      }
      double norm = std::hypot(dirx, diry);
      if (norm > 1e-9) {
        dirx /= norm;
        diry /= norm;
      }
    }

    // Zero out a thin slab perpendicular to the stroke direction.
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        double ox = x - pt.first, oy = y - pt.second;
        double along = ox * dirx + oy * diry;
        double across = -ox * diry + oy * dirx;
        if (std::abs(across) > half_len) continue;
        double keep = std::clamp(std::abs(along) - half_w + 0.5, 0.0, 1.0);
        out.at(x, y) = static_cast<float>(out.at(x, y) * keep);
      }
  }
  return out;
}

Image scale_about_center(const Image& img, double factor) {
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y) = sample_bilinear(img, cx + (x - cx) / factor, cy + (y - cy) / factor);
  return out;
}

Image colorize(const Image& img, int color_value_index) {
  const auto& rgb = color_rgb(color_value_index);
  Image out(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y) * rgb[c];
  return out;
}

}  // namespace

Image rotate_about_center(const Image& img, double degrees_ccw) {
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  const double th = degrees_ccw * M_PI / 180.0;
  // Visual counter-clockwise in y-down raster coordinates.
  const double m00 = std::cos(th), m01 = -std::sin(th);
  const double m10 = std::sin(th), m11 = std::cos(th);
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double dx = x - cx, dy = y - cy;
      double sx = cx + m00 * dx + m01 * dy;
      double sy = cy + m10 * dx + m11 * dy;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c);
    }
  return out;
}

const std::array<float, 3>& color_rgb(int color_value_index) {
  static const std::array<std::array<float, 3>, 7> table = {{
      {0.5f, 0.5f, 0.5f},  // gray
      {1.0f, 0.0f, 0.0f},  // red
      {0.0f, 1.0f, 0.0f},  // green
      {0.0f, 0.0f, 1.0f},  // blue
      {0.0f, 1.0f, 1.0f},  // cyan
      {1.0f, 0.0f, 1.0f},  // magenta
      {1.0f, 1.0f, 0.0f},  // yellow
  }};
  if (color_value_index < 0 || color_value_index >= 7)
    throw UnknownAttributeError("bad color index");
  return table[color_value_index];
}

Image apply_transform(const Image& img, AttrCategory category, int value_index, Rng& rng,
                      const TransformParams& params) {
  const auto& catalog = AttributeCatalog::instance();
  const auto& cat = catalog.category(category);
  if (value_index < 0 || value_index >= static_cast<int>(cat.values.size()))
    throw UnknownAttributeError("bad value index for " + cat.name);

  if (value_index == cat.identity_index) {
    require_gray(img, cat.name.c_str());
    require_nonempty(img, cat.name.c_str());
    return img;
  }

  switch (category) {
    case AttrCategory::kThickness: {
      require_gray(img, "thickness");
      require_nonempty(img, "thickness");
      double t = measure_thickness(img);
      double radius = (value_index == 1 ? params.thicken_amount : -params.thin_amount) * t / 2.0;
      return offset_stroke(img, radius);
    }
    case AttrCategory::kSwelling:
      require_gray(img, "swelling");
      require_nonempty(img, "swelling");
      return warp_swell(img, rng, params);
    case AttrCategory::kFracture:
      require_gray(img, "fracture");
      require_nonempty(img, "fracture");
      return cut_fractures(img, rng, params);
    case AttrCategory::kScaling:
      require_gray(img, "scaling");
      require_nonempty(img, "scaling");
      return scale_about_center(img, params.small_scale);
    case AttrCategory::kRotation:
      require_gray(img, "rotation");
      require_nonempty(img, "rotation");
      return rotate_about_center(img, value_index == 1 ? params.rotation_deg : -params.rotation_deg);
    case AttrCategory::kColor:
      require_gray(img, "color");
      require_nonempty(img, "color");
      return colorize(img, value_index);
  }
  throw UnknownAttributeError("unhandled category");
}

Image apply_transform(const Image& img, const std::string& category, const std::string& value,
                      Rng& rng, const TransformParams& params) {
  const auto& catalog = AttributeCatalog::instance();
  AttrCategory c = catalog.category_by_name(category);
  return apply_transform(img, c, catalog.value_index(c, value), rng, params);
}

Image render_object(const Image& digit, const AttributeAssignment& a, Rng& rng,
                    const TransformParams& params) {
  Image cur = digit;
  for (AttrCategory c : kAllCategories) cur = apply_transform(cur, c, a.value_of(c), rng, params);
  return cur;
}

}  // namespace madgrid
