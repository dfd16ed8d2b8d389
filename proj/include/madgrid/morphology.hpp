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

#include <utility>
#include <vector>

#include "madgrid/image.hpp"

namespace madgrid {

// Binary mask on a W x H grid, row-major.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> on;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), on(static_cast<size_t>(w) * h, 0) {}
  uint8_t& at(int x, int y) { return on[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return on[static_cast<size_t>(y) * width + x]; }
  size_t count() const;
};

Mask binarize(const Image& img, float thresh = 0.5f);

// Exact Euclidean distance (in pixels) from each pixel to the nearest pixel
// where inside==0, i.e. distance to the mask complement. Pixels outside the
// mask get distance 0.
std::vector<float> distance_to_complement(const Mask& inside);

// Zhang-Suen thinning; returns the 1-pixel-wide skeleton of the mask.
Mask skeletonize(const Mask& mask);

// Bilinear upsample by an integer factor (used to run morphology at 4x for
// smoother strokes).
Image upsample(const Image& img, int factor);

// Box-filter downsample by an integer factor.
Image downsample(const Image& img, int factor);

// Mean stroke thickness in pixels: twice the mean distance-transform value
// over the skeleton, measured at 4x upsampling. Throws EmptyImageError when
// nothing exceeds the binarization threshold.
double measure_thickness(const Image& img);

// Skeleton pixel coordinates at the image's own scale (binarize at 0.5).
// Falls back to foreground pixels when thinning eats everything.
std::vector<std::pair<int, int>> skeleton_points(const Image& img);

}  // namespace madgrid
