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
#include <cstdint>
#include <string>
#include <vector>

#include "madgrid/image.hpp"

namespace madgrid {

enum class DigitSplit { kTrain, kTest };

std::string to_string(DigitSplit s);
DigitSplit digit_split_from_string(const std::string& s);

// 28x28 grayscale digit corpus loaded from IDX files (optionally gzipped).
// Expects <dir>/train-images-idx3-ubyte[.gz] etc., the standard layout, so a
// full MNIST download can be dropped in place of the bundled subset.
class DigitStore {
 public:
  static DigitStore load(const std::string& dir, DigitSplit split);

  int total() const { return static_cast<int>(labels_.size()); }
  int class_count(int digit_class) const { return static_cast<int>(by_class_[digit_class].size()); }

  // Index local to the digit class; this is the source_index stored in
  // dataset metadata.
  Image image(int digit_class, int source_index) const;

  uint8_t label(int global_index) const { return labels_[global_index]; }
  Image image_by_global(int global_index) const;

 private:
  int rows_ = 28, cols_ = 28;
  std::vector<uint8_t> pixels_;  // total * rows * cols
  std::vector<uint8_t> labels_;
  std::array<std::vector<int32_t>, 10> by_class_;
};

}  // namespace madgrid
