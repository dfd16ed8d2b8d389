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

#include <algorithm>
#include <cstdint>
#include <vector>

#include "madgrid/common.hpp"

namespace madgrid {

// Interleaved float image in [0,1]; channels is 1 (grayscale) or 3 (RGB).
// Background is 0, foreground > 0.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> px;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), px(static_cast<size_t>(w) * h * c, 0.0f) {}

  float& at(int x, int y, int c = 0) {
    return px[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return px[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  bool empty_foreground(float thresh = 0.5f) const {
    return std::none_of(px.begin(), px.end(), [=](float v) { return v > thresh; });
  }
};

// Bilinear sample with zero padding outside the canvas. Single channel c.
inline float sample_bilinear(const Image& img, double x, double y, int c = 0) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto pick = [&](int xi, int yi) -> double {
    if (xi < 0 || yi < 0 || xi >= img.width || yi >= img.height) return 0.0;
    return img.at(xi, yi, c);
  };
  double v = pick(x0, y0) * (1 - fx) * (1 - fy) + pick(x0 + 1, y0) * fx * (1 - fy) +
             pick(x0, y0 + 1) * (1 - fx) * fy + pick(x0 + 1, y0 + 1) * fx * fy;
  return static_cast<float>(v);
}

struct BBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive; empty if x1 < x0
  bool empty() const { return x1 < x0 || y1 < y0; }
  int width() const { return empty() ? 0 : x1 - x0 + 1; }
  int height() const { return empty() ? 0 : y1 - y0 + 1; }
};

// Bounding box of pixels with any channel above thresh.
inline BBox foreground_bbox(const Image& img, float thresh = 0.0f) {
  BBox b{img.width, img.height, -1, -1};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        if (img.at(x, y, c) > thresh) {
          b.x0 = std::min(b.x0, x);
          b.y0 = std::min(b.y0, y);
          b.x1 = std::max(b.x1, x);
          b.y1 = std::max(b.y1, y);
        }
  return b;
}

inline std::vector<uint8_t> to_u8(const Image& img) {
  std::vector<uint8_t> out(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    float v = std::clamp(img.px[i], 0.0f, 1.0f);
    out[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

inline Image from_u8(const std::vector<uint8_t>& data, int w, int h, int c) {
  if (data.size() != static_cast<size_t>(w) * h * c)
    throw ShapeMismatchError("from_u8: size mismatch");
  Image img(w, h, c);
  for (size_t i = 0; i < data.size(); ++i) img.px[i] = data[i] / 255.0f;
  return img;
}

}  // namespace madgrid
