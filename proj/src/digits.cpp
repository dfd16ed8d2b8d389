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

#include "madgrid/digits.hpp"

#include <zlib.h>

#include <filesystem>

namespace madgrid {

namespace {

// Reads a whole file, transparently gunzipping (gzread passes plain files
// through unchanged).
std::vector<uint8_t> read_maybe_gz(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> out;
  uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
  bool bad = n < 0;
  gzclose(f);
  if (bad) throw IoError("gzread failed: " + path);
  return out;
}

std::string find_idx_file(const std::string& dir, const std::string& stem) {
  for (const char* ext : {".gz", ""}) {
    std::string p = dir + "/" + stem + ext;
    if (std::filesystem::exists(p)) return p;
  }
  throw IoError("digit corpus file not found: " + dir + "/" + stem + "[.gz]");
}

uint32_t be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

}  // namespace

std::string to_string(DigitSplit s) { return s == DigitSplit::kTrain ? "train" : "test"; }

DigitSplit digit_split_from_string(const std::string& s) {
  if (s == "train") return DigitSplit::kTrain;
  if (s == "test") return DigitSplit::kTest;
  throw ConfigError("unknown digit split: " + s);
}

DigitStore DigitStore::load(const std::string& dir, DigitSplit split) {
  const std::string prefix = split == DigitSplit::kTrain ? "train" : "t10k";
  auto img_bytes = read_maybe_gz(find_idx_file(dir, prefix + "-images-idx3-ubyte"));
  auto lbl_bytes = read_maybe_gz(find_idx_file(dir, prefix + "-labels-idx1-ubyte"));

  if (img_bytes.size() < 16 || be32(img_bytes.data()) != 2051)
    throw IoError("bad IDX image magic in " + dir);
  if (lbl_bytes.size() < 8 || be32(lbl_bytes.data()) != 2049)
    throw IoError("bad IDX label magic in " + dir);

  DigitStore store;
  uint32_t n = be32(img_bytes.data() + 4);
  store.rows_ = static_cast<int>(be32(img_bytes.data() + 8));
  store.cols_ = static_cast<int>(be32(img_bytes.data() + 12));
  if (store.rows_ != 28 || store.cols_ != 28) throw IoError("expected 28x28 digits");
  if (be32(lbl_bytes.data() + 4) != n) throw IoError("image/label count mismatch");

  size_t img_size = static_cast<size_t>(store.rows_) * store.cols_;
  if (img_bytes.size() != 16 + n * img_size || lbl_bytes.size() != 8 + n)
    throw IoError("IDX payload size mismatch");

  store.pixels_.assign(img_bytes.begin() + 16, img_bytes.end());
  store.labels_.assign(lbl_bytes.begin() + 8, lbl_bytes.end());
  for (uint32_t i = 0; i < n; ++i) {
    uint8_t lbl = store.labels_[i];
    if (lbl > 9) throw IoError("label out of range");
    store.by_class_[lbl].push_back(static_cast<int32_t>(i));
  }
  return store;
}

Image DigitStore::image(int digit_class, int source_index) const {
  if (digit_class < 0 || digit_class > 9) throw IdOutOfRangeError("digit class out of range");
  const auto& pool = by_class_[digit_class];
  if (source_index < 0 || source_index >= static_cast<int>(pool.size()))
    throw IdOutOfRangeError("source index out of range for class " + std::to_string(digit_class));
  return image_by_global(pool[source_index]);
}

Image DigitStore::image_by_global(int global_index) const {
  size_t img_size = static_cast<size_t>(rows_) * cols_;
  Image img(cols_, rows_, 1);
  const uint8_t* src = pixels_.data() + global_index * img_size;
  for (size_t i = 0; i < img_size; ++i) img.px[i] = src[i] / 255.0f;
  return img;
}

}  // namespace madgrid
