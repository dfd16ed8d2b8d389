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

#include "madgrid/scene.hpp"

namespace madgrid {

SceneImage compose_scene(const std::vector<std::pair<Image, ObjectSpec>>& rendered) {
  if (rendered.empty() || rendered.size() > 2)
    throw InvalidObjectCountError("scene needs 1 or 2 objects, got " +
                                  std::to_string(rendered.size()));
  for (size_t i = 0; i < rendered.size(); ++i) {
    const auto& [img, spec] = rendered[i];
    if (img.width != kCellSize || img.height != kCellSize || img.channels != 3)
      throw ShapeMismatchError("rendered object must be 28x28x3");
    if (spec.cell < 0 || spec.cell >= kGridCells)
      throw IdOutOfRangeError("object cell " + std::to_string(spec.cell));
    for (size_t j = 0; j < i; ++j)
      if (rendered[j].second.cell == spec.cell) throw ConfigError("objects share a cell");
  }

  SceneImage scene;
  scene.pixels = Image(kCanvasSize, kCanvasSize, 3);
  for (const auto& [obj, spec] : rendered) {
    auto [ox, oy] = cell_origin(spec.cell);
    for (int y = 0; y < kCellSize; ++y)
      for (int x = 0; x < kCellSize; ++x)
        for (int ch = 0; ch < 3; ++ch)
          scene.pixels.at(ox + x, oy + y, ch) = obj.at(x, y, ch);
    scene.objects.push_back(spec);
  }
  return scene;
}

SceneImage place_objects(const std::vector<std::pair<Image, ObjectSpec>>& rendered,
                         bool salient_first, Rng& rng) {
  if (rendered.empty() || rendered.size() > 2)
    throw InvalidObjectCountError("scene needs 1 or 2 objects, got " +
                                  std::to_string(rendered.size()));
  for (size_t i = 0; i < rendered.size(); ++i) {
    const auto& [img, spec] = rendered[i];
    if (img.width != kCellSize || img.height != kCellSize || img.channels != 3)
      throw ShapeMismatchError("rendered object must be 28x28x3");
    if (spec.salient != (salient_first && i == 0))
      throw ConfigError("salient flag must mark exactly the first object when salient_first");
  }

  int first_cell =
      salient_first ? kCenterCell : static_cast<int>(rng.uniform_u32(kGridCells));
  std::vector<std::pair<Image, ObjectSpec>> placed;
  placed.reserve(rendered.size());
  for (size_t i = 0; i < rendered.size(); ++i) {
    ObjectSpec spec = rendered[i].second;
    if (i == 0) {
      spec.cell = first_cell;
    } else {
      // Uniform over the 8 remaining cells: skip the occupied one.
      int c = static_cast<int>(rng.uniform_u32(kGridCells - 1));
      spec.cell = c >= first_cell ? c + 1 : c;
    }
    placed.emplace_back(rendered[i].first, spec);
  }
  return compose_scene(placed);
}

std::vector<std::pair<int, Image>> extract_cells(const Image& canvas) {
  if (canvas.width != kCanvasSize || canvas.height != kCanvasSize || canvas.channels != 3)
    throw ShapeMismatchError("canvas must be 96x96x3");
  std::vector<std::pair<int, Image>> out;
  for (int cell = 0; cell < kGridCells; ++cell) {
    auto [ox, oy] = cell_origin(cell);
    Image crop(kCellSize, kCellSize, 3);
    bool nonblack = false;
    for (int y = 0; y < kCellSize; ++y)
      for (int x = 0; x < kCellSize; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          float v = canvas.at(ox + x, oy + y, ch);
          crop.at(x, y, ch) = v;
          nonblack |= v != 0.0f;
        }
    if (nonblack) out.emplace_back(cell, std::move(crop));
  }
  return out;
}

}  // namespace madgrid
