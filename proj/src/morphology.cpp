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

#include "madgrid/morphology.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace madgrid {

size_t Mask::count() const {
  return static_cast<size_t>(std::accumulate(on.begin(), on.end(), size_t{0}));
}

Mask binarize(const Image& img, float thresh) {
  Mask m(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      float v = 0.0f;
      for (int c = 0; c < img.channels; ++c) v = std::max(v, img.at(x, y, c));
      m.at(x, y) = v > thresh ? 1 : 0;
    }
  return m;
}

namespace {

constexpr float kInf = std::numeric_limits<float>::max() / 4;

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void edt_1d(const std::vector<float>& f, std::vector<float>& d, std::vector<int>& v,
            std::vector<float>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    float s;
    while (true) {
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0f * (q - v[k]));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    float dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<float> distance_to_complement(const Mask& inside) {
  const int w = inside.width, h = inside.height;
  std::vector<float> sq(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < sq.size(); ++i) sq[i] = inside.on[i] ? kInf : 0.0f;

  int n = std::max(w, h);
  std::vector<float> f(n), d(n), z(n + 1);
  std::vector<int> v(n);

  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = sq[static_cast<size_t>(y) * w + x];
    edt_1d(f, d, v, z, h);
    for (int y = 0; y < h; ++y) sq[static_cast<size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = sq[static_cast<size_t>(y) * w + x];
    edt_1d(f, d, v, z, w);
    for (int x = 0; x < w; ++x) sq[static_cast<size_t>(y) * w + x] = d[x];
  }
  for (auto& s : sq) s = std::sqrt(s);
  return sq;
}

Mask skeletonize(const Mask& mask) {
  Mask m = mask;
  const int w = m.width, h = m.height;
  auto at = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return m.at(x, y);
  };

  std::vector<std::pair<int, int>> to_clear;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      to_clear.clear();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!m.at(x, y)) continue;
          int p2 = at(x, y - 1), p3 = at(x + 1, y - 1), p4 = at(x + 1, y);
          int p5 = at(x + 1, y + 1), p6 = at(x, y + 1), p7 = at(x - 1, y + 1);
          int p8 = at(x - 1, y), p9 = at(x - 1, y - 1);
          int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
          if (b < 2 || b > 6) continue;
          int a = (p2 == 0 && p3 == 1) + (p3 == 0 && p4 == 1) + (p4 == 0 && p5 == 1) +
                  (p5 == 0 && p6 == 1) + (p6 == 0 && p7 == 1) + (p7 == 0 && p8 == 1) +
                  (p8 == 0 && p9 == 1) + (p9 == 0 && p2 == 1);
          if (a != 1) continue;
          if (pass == 0) {
            if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
          } else {
            if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
          }
          to_clear.emplace_back(x, y);
        }
      }
      for (auto [x, y] : to_clear) m.at(x, y) = 0;
      changed = changed || !to_clear.empty();
    }
  }
  return m;
}

Image upsample(const Image& img, int factor) {
  Image out(img.width * factor, img.height * factor, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      // Align centers: out pixel center (x+0.5)/f maps to source coords.
      double sx = (x + 0.5) / factor - 0.5;
      double sy = (y + 0.5) / factor - 0.5;
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = sample_bilinear(img, sx, sy, c);
    }
  return out;
}

Image downsample(const Image& img, int factor) {
  Image out(img.width / factor, img.height / factor, img.channels);
  const float inv = 1.0f / (factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.0f;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = acc * inv;
      }
  return out;
}

double measure_thickness(const Image& img) {
  if (img.empty_foreground()) throw EmptyImageError("measure_thickness: empty image");
  constexpr int kScale = 4;
  Image up = upsample(img, kScale);
  Mask mask = binarize(up, 0.5f);
  if (mask.count() == 0) throw EmptyImageError("measure_thickness: empty after upsampling");
  auto dist = distance_to_complement(mask);
  Mask skel = skeletonize(mask);

  double sum = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < skel.on.size(); ++i)
    if (skel.on[i]) {
      sum += dist[i];
      ++n;
    }
  if (n == 0) {
    // Degenerate blob; fall back to the max inscribed radius.
    float best = 0.0f;
    for (size_t i = 0; i < mask.on.size(); ++i)
      if (mask.on[i]) best = std::max(best, dist[i]);
    return 2.0 * best / kScale;
  }
  return 2.0 * (sum / n) / kScale;
}

std::vector<std::pair<int, int>> skeleton_points(const Image& img) {
  Mask mask = binarize(img, 0.5f);
  Mask skel = skeletonize(mask);
  std::vector<std::pair<int, int>> pts;
  for (int y = 0; y < skel.height; ++y)
    for (int x = 0; x < skel.width; ++x)
      if (skel.at(x, y)) pts.emplace_back(x, y);
  if (pts.empty()) {
    for (int y = 0; y < mask.height; ++y)
      for (int x = 0; x < mask.width; ++x)
        if (mask.at(x, y)) pts.emplace_back(x, y);
  }
  return pts;
}

}  // namespace madgrid
