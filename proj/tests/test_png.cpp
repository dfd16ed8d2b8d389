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

#include "madgrid/png_io.hpp"

#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "madgrid/common.hpp"

using namespace madgrid;

namespace {

Image make_test_image(int w, int h) {
  Image img(w, h, 3);
  Rng rng(99);
  for (auto& p : img.px) p = static_cast<float>(rng.uniform_u32(256)) / 255.0f;
  return img;
}

}  // namespace

TEST_SUITE_BEGIN("png");

TEST_CASE("encode/decode round trip preserves every byte") {
  Image img = make_test_image(17, 9);
  auto png = encode_png(img);
  Image back = decode_png(png.data(), png.size());
  REQUIRE(back.same_shape(img));
  auto a = to_u8(img), b = to_u8(back);
  CHECK(a == b);
}

TEST_CASE("encoding is byte-deterministic") {
  Image img = make_test_image(32, 32);
  auto p1 = encode_png(img);
  auto p2 = encode_png(img);
  CHECK(p1 == p2);
  CHECK(p1.size() > 8);
  // PNG signature.
  CHECK(p1[0] == 0x89);
  CHECK(p1[1] == 'P');
}

TEST_CASE("file round trip") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "madgrid_png_test.png";
  Image img = make_test_image(8, 5);
  write_png_file(path.string(), img);
  Image back = read_png_file(path.string());
  CHECK(to_u8(back) == to_u8(img));
  fs::remove(path);
}

TEST_CASE("corrupt data raises CorruptRecord") {
  std::vector<uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK_THROWS_AS(decode_png(junk.data(), junk.size()), CorruptRecordError);
  Image img = make_test_image(6, 6);
  auto png = encode_png(img);
  png.resize(png.size() / 2);  // truncation
  CHECK_THROWS_AS(decode_png(png.data(), png.size()), CorruptRecordError);
}

TEST_SUITE_END();
