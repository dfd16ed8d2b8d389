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

#include "madgrid/common.hpp"
#include "madgrid/image.hpp"
#include "madgrid/transforms.hpp"

namespace madgrid {

// 3x3 grid of 28x28 cells on a 96x96 canvas. The 84x84 grid block is centered
// with a uniform 6 px black margin; cell 4 is the geometric center.
constexpr int kCanvasSize = 96;
constexpr int kCellSize = 28;
constexpr int kGridMargin = 6;
constexpr int kGridCells = 9;
constexpr int kCenterCell = 4;

// Top-left pixel of a cell; cells are row-major, 0 top-left to 8 bottom-right.
inline std::pair<int, int> cell_origin(int cell) {
  if (cell < 0 || cell >= kGridCells) throw IdOutOfRangeError("cell " + std::to_string(cell));
  return {kGridMargin + kCellSize * (cell % 3), kGridMargin + kCellSize * (cell / 3)};
}

// One placed object: source digit, attribute map, grid cell, saliency flag.
struct ObjectSpec {
  int digit_class = 0;
  int source_index = 0;
  AttributeAssignment attributes;
  int cell = -1;  // unset until placed
  bool salient = false;

  bool operator==(const ObjectSpec&) const = default;
};

struct SceneImage {
  Image pixels;  // 96x96x3, zero outside occupied cells
  std::vector<ObjectSpec> objects;
};

// Copies 1-2 rendered 28x28 RGB objects into cells sampled uniformly without
// replacement. With salient_first, the first object (which must carry
// salient=true) always takes the center cell.
SceneImage place_objects(const std::vector<std::pair<Image, ObjectSpec>>& rendered,
                         bool salient_first, Rng& rng);

// Same compositing with cells already assigned (distinct, in range); used to
// re-render a scene at its original layout.
SceneImage compose_scene(const std::vector<std::pair<Image, ObjectSpec>>& rendered);

// Crops of all cells whose pixels are not all zero, with their cell indices.
std::vector<std::pair<int, Image>> extract_cells(const Image& canvas);
inline std::vector<std::pair<int, Image>> extract_cells(const SceneImage& scene) {
  return extract_cells(scene.pixels);
}

}  // namespace madgrid
