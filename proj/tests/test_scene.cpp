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

#include "doctest.h"

using namespace madgrid;

namespace {

// A 28x28 RGB stamp with a recognizable constant fill.
Image stamp(float r, float g, float b) {
  Image img(28, 28, 3);
  for (int y = 4; y < 24; ++y)
    for (int x = 4; x < 24; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  return img;
}

}  // namespace

TEST_SUITE_BEGIN("scene");

TEST_CASE("grid geometry: disjoint in-canvas cells with cell 4 centered") {
  CHECK(cell_origin(0).first == 6);
  CHECK(cell_origin(0).second == 6);
  CHECK(cell_origin(2).first == 62);
  CHECK(cell_origin(2).second == 6);
  CHECK(cell_origin(4).first == 34);
  CHECK(cell_origin(4).second == 34);
  CHECK(cell_origin(8).first == 62);
  CHECK(cell_origin(8).second == 62);
  // Cell 4 spans [34,61]; its center (47.5) is the canvas center.
  CHECK((34 + 61) / 2.0 == doctest::Approx((kCanvasSize - 1) / 2.0));
  CHECK(62 + kCellSize <= kCanvasSize - kGridMargin + 0);
  CHECK_THROWS_AS(cell_origin(9), IdOutOfRangeError);
  CHECK_THROWS_AS(cell_origin(-1), IdOutOfRangeError);
}

TEST_CASE("single object occupies exactly one cell, uniformly over draws") {
  Rng rng(51);
  std::array<int, 9> freq{};
  for (int trial = 0; trial < 9000; ++trial) {
    SceneImage scene = place_objects({{stamp(1, 0, 0), ObjectSpec{}}}, false, rng);
    REQUIRE(scene.objects.size() == 1);
    auto cells = extract_cells(scene);
    REQUIRE(cells.size() == 1);
    REQUIRE(cells[0].first == scene.objects[0].cell);
    freq[scene.objects[0].cell]++;
  }
  for (int c = 0; c < 9; ++c) {
    double f = freq[c] / 9000.0;
    CHECK(f >= 0.095);
    CHECK(f <= 0.128);
  }
}

TEST_CASE("salient object pins the center cell; partner avoids it") {
  Rng rng(52);
  std::array<int, 9> partner_freq{};
  for (int trial = 0; trial < 4000; ++trial) {
    ObjectSpec salient;
    salient.salient = true;
    SceneImage scene = place_objects(
        {{stamp(1, 0, 0), salient}, {stamp(0, 1, 0), ObjectSpec{}}}, true, rng);
    REQUIRE(scene.objects[0].cell == kCenterCell);
    REQUIRE(scene.objects[0].salient);
    REQUIRE(scene.objects[1].cell != kCenterCell);
    partner_freq[scene.objects[1].cell]++;
  }
  for (int c = 0; c < 9; ++c) {
    if (c == kCenterCell) {
      CHECK(partner_freq[c] == 0);
    } else {
      CHECK(partner_freq[c] > 4000 / 8 / 2);
    }
  }
}

TEST_CASE("two objects never collide and fill disjoint cells") {
  Rng rng(53);
  for (int trial = 0; trial < 10000; ++trial) {
    SceneImage scene =
        place_objects({{stamp(1, 0, 0), ObjectSpec{}}, {stamp(0, 1, 0), ObjectSpec{}}}, false, rng);
    REQUIRE(scene.objects[0].cell != scene.objects[1].cell);
  }
}

TEST_CASE("placement round-trips bit-exactly through extract_cells") {
  Rng rng(54);
  Image a = stamp(0.9f, 0.1f, 0.2f), b = stamp(0.2f, 0.8f, 0.3f);
  SceneImage scene = place_objects({{a, ObjectSpec{}}, {b, ObjectSpec{}}}, false, rng);
  auto cells = extract_cells(scene);
  REQUIRE(cells.size() == 2);
  for (const auto& [cell, crop] : cells) {
    const Image& src = cell == scene.objects[0].cell ? a : b;
    bool known_cell = cell == scene.objects[0].cell || cell == scene.objects[1].cell;
    REQUIRE(known_cell);
    CHECK(crop.px == src.px);
  }
}

TEST_CASE("pixels outside occupied cells are exactly zero") {
  Rng rng(55);
  SceneImage scene = place_objects({{stamp(1, 1, 1), ObjectSpec{}}}, false, rng);
  auto [ox, oy] = cell_origin(scene.objects[0].cell);
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x) {
      bool inside = x >= ox && x < ox + kCellSize && y >= oy && y < oy + kCellSize;
      if (!inside)
        for (int c = 0; c < 3; ++c) REQUIRE(scene.pixels.at(x, y, c) == 0.0f);
    }
}

TEST_CASE("object count and shape preconditions are enforced") {
  Rng rng(56);
  CHECK_THROWS_AS(place_objects({}, false, rng), InvalidObjectCountError);
  std::vector<std::pair<Image, ObjectSpec>> three(3, {stamp(1, 0, 0), ObjectSpec{}});
  CHECK_THROWS_AS(place_objects(three, false, rng), InvalidObjectCountError);
  CHECK_THROWS_AS(place_objects({{Image(28, 28, 1), ObjectSpec{}}}, false, rng),
                  ShapeMismatchError);
  // salient_first demands a matching salient flag.
  CHECK_THROWS_AS(place_objects({{stamp(1, 0, 0), ObjectSpec{}}}, true, rng), ConfigError);
}

TEST_CASE("all-black canvas extracts no cells") {
  Image black(kCanvasSize, kCanvasSize, 3);
  CHECK(extract_cells(black).empty());
  CHECK_THROWS_AS(extract_cells(Image(32, 32, 3)), ShapeMismatchError);
}

TEST_SUITE_END();
