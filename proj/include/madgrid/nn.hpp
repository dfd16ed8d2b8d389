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

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "madgrid/common.hpp"

// Minimal transformer engine with hand-written backprop. Everything is
// templated on the scalar so training runs in float while gradient checks
// run the identical code in double against central finite differences.
namespace madgrid::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// One trainable tensor plus its gradient and Adam moments.
template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  Mat<S> m, v;
  bool decay = true;  // false for biases, norms, embeddings-as-tables, scales
};

template <typename S>
class ParamStore {
 public:
  Param<S>* add(const std::string& name, int rows, int cols, bool decay);
  Param<S>* find(const std::string& name);  // nullptr when absent
  const std::vector<std::unique_ptr<Param<S>>>& all() const { return params_; }
  int64_t scalar_count() const;
  void zero_grads();

 private:
  std::vector<std::unique_ptr<Param<S>>> params_;
};

template <typename S>
void init_normal(Param<S>& p, Rng& rng, double stddev);

// y = x W + b with x (N, in), W (in, out).
template <typename S>
struct Linear {
  Param<S>* w = nullptr;
  Param<S>* b = nullptr;
  Mat<S> x_cache;

  void create(ParamStore<S>& store, const std::string& name, int in, int out, bool bias = true);
  Mat<S> forward(const Mat<S>& x);
  Mat<S> backward(const Mat<S>& dy);
};

// Row-wise layer normalization over the feature dimension.
template <typename S>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Param<S>* gamma = nullptr;
  Param<S>* beta = nullptr;
  Mat<S> xhat_cache;
  Vec<S> inv_std_cache;

  void create(ParamStore<S>& store, const std::string& name, int dim);
  Mat<S> forward(const Mat<S>& x);
  Mat<S> backward(const Mat<S>& dy);
};

// x * sigmoid(1.702 x), the activation used by the reference dual encoder.
template <typename S>
struct QuickGelu {
  Mat<S> x_cache;
  Mat<S> forward(const Mat<S>& x);
  Mat<S> backward(const Mat<S>& dy);
};

enum class AttnMask { kNone, kCausal };

// Multi-head self-attention over (batch * tokens, width) rows. An optional
// per-batch key padding mask (1 = masked) removes pad tokens from every
// softmax; masked gradients are exactly zero.
template <typename S>
struct SelfAttention {
  int heads = 0;
  int tokens = 0;  // fixed sequence length per batch element
  AttnMask mask = AttnMask::kNone;
  Linear<S> qkv;
  Linear<S> out;

  void create(ParamStore<S>& store, const std::string& name, int width, int heads, int tokens,
              AttnMask mask);
  Mat<S> forward(const Mat<S>& x, const std::vector<uint8_t>* key_pad = nullptr);
  Mat<S> backward(const Mat<S>& dy);

 private:
  int batch_ = 0;
  Mat<S> qkv_cache;
  std::vector<uint8_t> key_pad_;
  std::vector<Mat<S>> probs_;  // batch*heads entries of (key, query) probabilities
  Mat<S> scores_t_;            // (key, query) scratch reused across calls
};

// Pre-LN transformer block: x += attn(ln1(x)); x += mlp(ln2(x)).
template <typename S>
struct Block {
  LayerNorm<S> ln1, ln2;
  SelfAttention<S> attn;
  Linear<S> fc, proj;
  QuickGelu<S> gelu;

  void create(ParamStore<S>& store, const std::string& name, int width, int heads, int tokens,
              AttnMask mask, int mlp_ratio = 4);
  Mat<S> forward(const Mat<S>& x, const std::vector<uint8_t>* key_pad = nullptr);
  Mat<S> backward(const Mat<S>& dy);
};

// Token embedding table with scatter-add backward.
template <typename S>
struct Embedding {
  Param<S>* table = nullptr;

  void create(ParamStore<S>& store, const std::string& name, int vocab, int dim);
  Mat<S> forward(const std::vector<int>& ids);  // IdOutOfRangeError
  void backward(const Mat<S>& dy);

 private:
  std::vector<int> ids_cache_;
};

// Rows scaled to unit L2 norm; backward projects out the radial component.
template <typename S>
struct L2Normalize {
  Mat<S> y_cache;
  Vec<S> inv_norm_cache;
  Mat<S> forward(const Mat<S>& x);
  Mat<S> backward(const Mat<S>& dy);
};

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.1;  // applied only to params with decay=true
};

template <typename S>
class AdamW {
 public:
  explicit AdamW(const AdamWConfig& cfg) : cfg_(cfg) {}
  // lr_now overrides cfg.lr for this step (schedules live outside).
  void step(ParamStore<S>& store, double lr_now);
  int64_t steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  int64_t t_ = 0;
};

// Linear warmup to base_lr, then cosine decay to zero over the remainder.
double cosine_lr(int64_t step, int64_t total_steps, double base_lr, int64_t warmup_steps);

}  // namespace madgrid::nn
