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
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "madgrid/dataset.hpp"
#include "madgrid/nn.hpp"

namespace madgrid {

// ---------------------------------------------------------------------------
// Model configuration
// ---------------------------------------------------------------------------

// Dual-encoder sizes. Defaults are the reference model trained throughout:
// a 6-layer ViT over 8x8 patches of the 96x96 scene and a 6-layer causal
// text transformer over the 33-token vocabulary, meeting in a shared
// 32-dimensional embedding space.
struct ModelConfig {
  int embed_dim = 32;
  int image_resolution = 96;
  int vision_layers = 6;
  int vision_width = 48;
  int vision_heads = 4;
  int vision_patch_size = 8;
  int text_width = 32;
  int text_layers = 6;
  int text_heads = 4;
  int context_length = 20;
  int vocab_size = 33;
  double temperature_init = 0.07;  // logit scale starts at 1/temperature_init
  double logit_scale_max = 100.0;

  int grid_tokens() const {
    int g = image_resolution / vision_patch_size;
    return g * g;
  }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);  // ConfigError
  uint64_t content_hash() const;
  void validate() const;  // ConfigError on bad divisibility / ranges
};

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

// Vision and text towers sharing one parameter store. Scalar type S is float
// in training and double in gradient checks. encode_* keeps the activations
// needed by the matching backward_* call.
template <typename S>
class TinyClip {
 public:
  TinyClip(const ModelConfig& cfg, uint64_t init_seed);

  // images: one row per image, image_resolution^2 * 3 interleaved RGB floats
  // in [0,1]. Returns unit-norm rows (n, embed_dim).
  nn::Mat<S> encode_images(const nn::Mat<S>& images);
  void backward_images(const nn::Mat<S>& d_embed);

  // ids: each sequence at most context_length long, padded internally with
  // <pad>; must contain <end>. Returns unit-norm rows (n, embed_dim).
  nn::Mat<S> encode_texts(const std::vector<std::vector<int>>& ids);
  void backward_texts(const nn::Mat<S>& d_embed);

  // exp(logit_scale) with the configured ceiling applied.
  S effective_scale() const;
  nn::Param<S>* logit_scale() { return scale_; }
  // Applied after each optimizer step so the scale never exceeds the ceiling.
  void clamp_logit_scale();

  nn::ParamStore<S>& params() { return store_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  nn::ParamStore<S> store_;

  // Vision tower.
  nn::Linear<S> patch_embed_;
  nn::Param<S>* cls_ = nullptr;
  nn::Param<S>* vision_pos_ = nullptr;
  nn::LayerNorm<S> ln_pre_, ln_post_;
  std::vector<nn::Block<S>> vision_blocks_;
  nn::Linear<S> vision_proj_;
  nn::L2Normalize<S> vision_norm_;
  int vision_batch_ = 0;

  // Text tower.
  nn::Embedding<S> token_embed_;
  nn::Param<S>* text_pos_ = nullptr;
  std::vector<nn::Block<S>> text_blocks_;
  nn::LayerNorm<S> ln_final_;
  nn::Linear<S> text_proj_;
  nn::L2Normalize<S> text_norm_;
  std::vector<uint8_t> pad_mask_;
  std::vector<int> end_pos_;

  nn::Param<S>* scale_ = nullptr;
};

// Rows of u8 records as a (n, resolution^2*3) float matrix scaled to [0,1].
template <typename S>
nn::Mat<S> images_to_matrix(const std::vector<const PairRecord*>& records, int resolution);

// ---------------------------------------------------------------------------
// Symmetric InfoNCE with optional extra negatives
// ---------------------------------------------------------------------------

// img (n_img, d) and txt (n_txt, d) must be unit rows; the first `pairs` rows
// of each are the matched positives and any extra rows act as negatives only:
// extra texts enlarge every image->text softmax, extra images enlarge every
// text->image softmax. Gradients are written to *d_img, *d_txt (always) and
// accumulated into logit_scale->grad unless the scale sits at its ceiling.
// Throws BatchTooSmallError when pairs < 2 and ShapeMismatchError on layout.
template <typename S>
S clip_loss(const nn::Mat<S>& img, const nn::Mat<S>& txt, int pairs,
            nn::Param<S>* logit_scale, double logit_scale_max, nn::Mat<S>* d_img,
            nn::Mat<S>* d_txt);

// ---------------------------------------------------------------------------
// Hard negatives
// ---------------------------------------------------------------------------

// A caption with exactly one attribute swap between its two objects, used as
// an extra contrastive negative.
struct HardNegative {
  AttrCategory category;                      // swapped category
  std::array<DescribedObject, 2> objects;     // caption order, values swapped
  std::vector<std::string> tokens;
  std::vector<int> ids;
};

// Swaps one category that both captioned objects describe with differing
// values, chosen uniformly; nullopt when the record has fewer than two
// captioned objects or no such category.
std::optional<HardNegative> make_hard_negative(const PairRecord& rec, Rng& rng);

// The record's scene re-rendered with the swapped attribute values at the
// original cells (fresh transform jitter, same digits and layout).
std::vector<uint8_t> render_swapped_image(const PairRecord& rec, const HardNegative& neg,
                                          const DigitStore& store, Rng& rng);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int batch_size = 16;
  int epochs = 30;
  double lr = 1e-3;
  double weight_decay = 0.1;
  int warmup_steps = 100;
  uint64_t seed = 0;
  std::string negatives = "none";  // none | text | text+image
  int log_every = 25;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  uint64_t content_hash() const;
  void validate() const;  // ConfigError
};

struct TrainLogRow {
  int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double logit_scale = 0.0;  // effective (exponentiated, clamped)
};

// Observation hook invoked after each completed epoch (1-based index). The
// model may be read (e.g. scored against a held-out set) but not mutated;
// training is unaffected by the observer.
using EpochObserver = std::function<void(int epoch, TinyClip<float>&)>;

// Trains a fresh model on the records. digits is only needed for
// negatives="text+image" (swap image re-rendering) and may be null otherwise.
// Throws BatchTooSmallError if records cannot fill one batch and
// DivergenceError if the loss leaves the finite range.
std::unique_ptr<TinyClip<float>> train_model(const ModelConfig& model_cfg,
                                             const TrainConfig& train_cfg,
                                             const std::vector<PairRecord>& records,
                                             const DigitStore* digits,
                                             std::vector<TrainLogRow>* log = nullptr,
                                             const EpochObserver& on_epoch = nullptr);

// Fraction of rows whose best match is their own pair, averaged over the
// image->text and text->image directions.
double in_batch_retrieval(TinyClip<float>& model, const std::vector<PairRecord>& records);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Binary checkpoint: JSON header (format version, model config, vocabulary
// hash, caller metadata) + raw float32 parameters + integrity hash.
void save_checkpoint(const std::string& path, TinyClip<float>& model,
                     const nlohmann::json& extra = {});
// Rebuilds the model; ManifestMismatchError when the stored config or
// vocabulary hash disagrees, CorruptRecordError on integrity failure.
std::unique_ptr<TinyClip<float>> load_checkpoint(const std::string& path,
                                                 nlohmann::json* extra = nullptr);

}  // namespace madgrid
