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

#include <cstdint>
#include <string>
#include <vector>

#include "madgrid/image.hpp"

namespace madgrid {

// 8-bit RGB PNG encode/decode. Encoding settings are fixed so identical
// pixels always produce identical bytes.
std::vector<uint8_t> encode_png_rgb8(const std::vector<uint8_t>& rgb, int width, int height);
std::vector<uint8_t> encode_png(const Image& img);

Image decode_png(const uint8_t* data, size_t size);

void write_png_file(const std::string& path, const Image& img);
Image read_png_file(const std::string& path);

}  // namespace madgrid
