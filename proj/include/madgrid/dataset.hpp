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

#include <string>
#include <vector>

#include "json.hpp"
#include "madgrid/caption.hpp"
#include "madgrid/digits.hpp"
#include "madgrid/scene.hpp"

namespace madgrid {

// Bumped whenever generated bytes could change; part of every content hash.
inline constexpr const char* kGeneratorVersion = "madgrid-data-1";

// The four controllable data properties plus bookkeeping. p_two_obj_cap is
// conditional on the image having two objects.
struct DataConfig {
  double p_two_obj_img = 1.0;
  double p_two_obj_cap = 1.0;
  double attr_mean = 1.8;  // E[n_a], expands via AttrCountDistribution::from_mean
  double p_saliency = 0.0;
  int n_samples = 50000;
  std::string split = "train";        // train | test | ood-test
  std::string mnist_split = "train";  // train | test
  uint64_t seed = 0;

  AttrCountDistribution attr_dist() const { return AttrCountDistribution::from_mean(attr_mean); }
  DigitSplit digit_split() const;

  nlohmann::json to_json() const;
  static DataConfig from_json(const nlohmann::json& j);  // ConfigError on bad fields
  uint64_t content_hash() const;

  // Annotated data-property presets.
  static DataConfig realistic();  // (0.95, 0.6, E=0.57, saliency 0.9)
  static DataConfig ideal();      // (1.0, 1.0, E=3.5, saliency 0)
  static DataConfig base();       // (1.0, 1.0, E=1.8, saliency 0)

  void validate() const;  // ConfigError
};

// Attribute-value/digit combinations held out of train and in-distribution
// test generation, and required (at least once per sample) in ood-test.
struct OodSpec {
  struct ExcludedPair {
    AttrCategory category;
    int value_index;
    int digit_class;
  };
  std::vector<ExcludedPair> excluded;

  static const OodSpec& standard();
  bool matches(int digit_class, const AttributeAssignment& a) const;
};

// One serialized image-caption pair. The image is stored as the 8-bit RGB the
// PNG round-trip preserves; floats are derived views.
struct PairRecord {
  int64_t id = 0;
  std::vector<uint8_t> image_rgb;  // 96*96*3, row-major interleaved
  std::vector<std::string> caption_tokens;
  std::vector<int> caption_ids;  // padded to kContextLength
  std::vector<ObjectSpec> objects;  // scene order, cells assigned
  std::vector<int> caption_order;   // objects[] indices in caption order
  std::vector<std::array<bool, kCategoryCount>> described;  // parallel to caption_order
  bool salient = false;

  // The captioned objects with their described masks, in caption order.
  std::vector<DescribedObject> described_objects() const;

  nlohmann::json meta_json() const;
  static PairRecord from_meta_json(const nlohmann::json& j, std::vector<uint8_t> png_bytes);
};

// Pre-render skeleton of a pair: object identities, saliency, captioned
// subset and described masks, but no pixels yet. Sampling this first keeps
// the statistical properties cheap to audit at scale.
struct PairStructure {
  std::vector<ObjectSpec> specs;  // specs[0] carries the salient flag if any
  bool salient = false;
  std::vector<int> caption_order;  // indices into specs, caption order
  std::vector<std::array<bool, kCategoryCount>> described;  // parallel to caption_order
};

// Rejection budget of 1000 draws per object (train/test) or per sample
// (ood-test); RejectionBudgetError past it.
PairStructure sample_pair_structure(const DataConfig& cfg, const OodSpec& ood,
                                    const DigitStore& store, Rng& rng);

// Renders spec's digit through the attribute pipeline. A handful of faint
// digit instances lose their whole stroke under extreme thinning; when that
// happens the source digit is redrawn (updating spec.source_index) under the
// usual rejection budget.
Image render_scene_object(const DigitStore& store, ObjectSpec& spec, Rng& rng);

// Draws one full pair under cfg: structure, then rendering and placement
// from the same stream.
PairRecord sample_pair(const DataConfig& cfg, const OodSpec& ood, const DigitStore& store,
                       int64_t sample_id, Rng& rng);

// Recognition/binding eval sets: always two objects, both captioned, attr
// count 3 in even records and 4 in odd ones, target category described on
// both objects with differing values ("object" = differing digit classes).
struct EvalConfig {
  std::string target = "color";  // category name or "object"
  int n_records = 2000;
  std::string split = "test";  // test | ood-test
  std::string mnist_split = "test";
  uint64_t seed = 0;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
  uint64_t content_hash() const;
  void validate() const;
};

std::vector<PairRecord> build_eval_set(const EvalConfig& cfg, const OodSpec& ood,
                                       const DigitStore& store);

// ---------------------------------------------------------------------------
// Shard serialization: dir/manifest.json + dir/shard-NNN.bin. Each shard is a
// run of records, each [u32 meta_len][meta JSON][u32 png_len][PNG bytes],
// little-endian. Bytes are a pure function of (config, generator version).
// ---------------------------------------------------------------------------

constexpr int kShardCapacity = 10000;

void write_shards(const std::string& dir, const std::string& kind, const nlohmann::json& config,
                  uint64_t config_hash, const std::vector<PairRecord>& records);
// Validates the manifest (config hash, counts, per-shard payload hashes).
std::vector<PairRecord> read_shards(const std::string& dir);
nlohmann::json read_manifest(const std::string& dir);

// Generates all n_samples pairs under cfg and serializes them.
void generate_dataset(const DataConfig& cfg, const DigitStore& store, const std::string& dir);
void generate_eval_set(const EvalConfig& cfg, const DigitStore& store, const std::string& dir);

}  // namespace madgrid
