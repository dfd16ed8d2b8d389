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

#include "madgrid/nn.hpp"

#include <cmath>
#include <limits>

namespace madgrid::nn {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

template <typename S>
Param<S>* ParamStore<S>::add(const std::string& name, int rows, int cols, bool decay) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Param<S>>();
  p->name = name;
  p->value = Mat<S>::Zero(rows, cols);
  p->grad = Mat<S>::Zero(rows, cols);
  p->m = Mat<S>::Zero(rows, cols);
  p->v = Mat<S>::Zero(rows, cols);
  p->decay = decay;
  params_.push_back(std::move(p));
  return params_.back().get();
}

template <typename S>
Param<S>* ParamStore<S>::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <typename S>
int64_t ParamStore<S>::scalar_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename S>
void ParamStore<S>::zero_grads() {
  for (auto& p : params_) p->grad.setZero();
}

template <typename S>
void init_normal(Param<S>& p, Rng& rng, double stddev) {
  for (Eigen::Index c = 0; c < p.value.cols(); ++c)
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      p.value(r, c) = static_cast<S>(rng.normal() * stddev);
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

template <typename S>
void Linear<S>::create(ParamStore<S>& store, const std::string& name, int in, int out, bool bias) {
  w = store.add(name + ".w", in, out, /*decay=*/true);
  b = bias ? store.add(name + ".b", 1, out, /*decay=*/false) : nullptr;
}

template <typename S>
Mat<S> Linear<S>::forward(const Mat<S>& x) {
  if (x.cols() != w->value.rows())
    throw ShapeMismatchError("linear " + w->name + ": input width " + std::to_string(x.cols()));
  x_cache = x;
  Mat<S> y = x * w->value;
  if (b != nullptr) y.rowwise() += b->value.row(0);
  return y;
}

template <typename S>
Mat<S> Linear<S>::backward(const Mat<S>& dy) {
  w->grad.noalias() += x_cache.transpose() * dy;
  if (b != nullptr) b->grad.row(0) += dy.colwise().sum();
  return dy * w->value.transpose();
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

template <typename S>
void LayerNorm<S>::create(ParamStore<S>& store, const std::string& name, int dim) {
  gamma = store.add(name + ".g", 1, dim, /*decay=*/false);
  gamma->value.setOnes();
  beta = store.add(name + ".b", 1, dim, /*decay=*/false);
}

template <typename S>
Mat<S> LayerNorm<S>::forward(const Mat<S>& x) {
  Vec<S> mean = x.rowwise().mean();
  xhat_cache = x.colwise() - mean;
  Vec<S> var = xhat_cache.array().square().rowwise().mean();
  inv_std_cache = (var.array() + static_cast<S>(kEps)).sqrt().inverse().matrix();
  xhat_cache.array().colwise() *= inv_std_cache.array();
  Mat<S> y = xhat_cache.array().rowwise() * gamma->value.row(0).array();
  y.rowwise() += beta->value.row(0);
  return y;
}

template <typename S>
Mat<S> LayerNorm<S>::backward(const Mat<S>& dy) {
  gamma->grad.row(0) += (dy.array() * xhat_cache.array()).colwise().sum().matrix();
  beta->grad.row(0) += dy.colwise().sum();
  Mat<S> dxhat = (dy.array().rowwise() * gamma->value.row(0).array()).matrix();
  Vec<S> m1 = dxhat.rowwise().mean();
  Vec<S> m2 = (dxhat.array() * xhat_cache.array()).rowwise().mean();
  Mat<S> dx = dxhat.colwise() - m1;
  dx.array() -= xhat_cache.array().colwise() * m2.array();
  dx.array().colwise() *= inv_std_cache.array();
  return dx;
}

// ---------------------------------------------------------------------------
// QuickGelu
// ---------------------------------------------------------------------------

template <typename S>
Mat<S> QuickGelu<S>::forward(const Mat<S>& x) {
  x_cache = x;
  return x.array() / (S(1) + (-S(1.702) * x.array()).exp());
}

template <typename S>
Mat<S> QuickGelu<S>::backward(const Mat<S>& dy) {
  auto s = (S(1) / (S(1) + (-S(1.702) * x_cache.array()).exp())).eval();
  auto dgelu = s + x_cache.array() * S(1.702) * s * (S(1) - s);
  return (dy.array() * dgelu).matrix();
}

// ---------------------------------------------------------------------------
// SelfAttention
// ---------------------------------------------------------------------------

template <typename S>
void SelfAttention<S>::create(ParamStore<S>& store, const std::string& name, int width, int heads_in,
                              int tokens_in, AttnMask mask_in) {
  if (width % heads_in != 0) throw ConfigError("attention width not divisible by heads");
  heads = heads_in;
  tokens = tokens_in;
  mask = mask_in;
  qkv.create(store, name + ".qkv", width, 3 * width);
  out.create(store, name + ".out", width, width);
}

// Scores and probabilities are held keys-by-queries (transposed from the
// usual orientation): with column-major storage every softmax then reduces
// over one contiguous column, which benchmarks several times faster than the
// row-wise broadcast form, and the backward GEMMs take the transposed
// probabilities directly.
template <typename S>
Mat<S> SelfAttention<S>::forward(const Mat<S>& x, const std::vector<uint8_t>* key_pad) {
  const int width = static_cast<int>(x.cols());
  const int dh = width / heads;
  if (x.rows() % tokens != 0) throw ShapeMismatchError("attention: rows not a multiple of tokens");
  batch_ = static_cast<int>(x.rows()) / tokens;
  if (key_pad != nullptr && static_cast<int>(key_pad->size()) != batch_ * tokens)
    throw ShapeMismatchError("attention: key_pad size mismatch");
  key_pad_ = key_pad != nullptr ? *key_pad : std::vector<uint8_t>();

  qkv_cache = qkv.forward(x);
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const S neg_inf = -std::numeric_limits<S>::infinity();

  probs_.resize(static_cast<size_t>(batch_) * heads);
  scores_t_.resize(tokens, tokens);
  Mat<S> heads_out(x.rows(), width);
  for (int b = 0; b < batch_; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto q = qkv_cache.block(b * tokens, h * dh, tokens, dh);
      auto k = qkv_cache.block(b * tokens, width + h * dh, tokens, dh);
      auto v = qkv_cache.block(b * tokens, 2 * width + h * dh, tokens, dh);
      scores_t_.noalias() = (k * q.transpose()) * scale;  // (key, query)
      if (mask == AttnMask::kCausal) {
        for (int j = 0; j + 1 < tokens; ++j)
          scores_t_.col(j).tail(tokens - 1 - j).setConstant(neg_inf);
      }
      if (!key_pad_.empty()) {
        for (int i = 0; i < tokens; ++i)
          if (key_pad_[b * tokens + i]) scores_t_.row(i).setConstant(neg_inf);
      }
      Mat<S>& p = probs_[static_cast<size_t>(b) * heads + h];
      p.resize(tokens, tokens);
      for (int j = 0; j < tokens; ++j) {
        const S m = scores_t_.col(j).maxCoeff();
        p.col(j) = (scores_t_.col(j).array() - m).exp().matrix();
        p.col(j) *= S(1) / p.col(j).sum();
      }
      heads_out.block(b * tokens, h * dh, tokens, dh).noalias() = p.transpose() * v;
    }
  }
  return out.forward(heads_out);
}

template <typename S>
Mat<S> SelfAttention<S>::backward(const Mat<S>& dy) {
  const int width = static_cast<int>(dy.cols());
  const int dh = width / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  Mat<S> dheads = out.backward(dy);
  Mat<S> dqkv = Mat<S>::Zero(dheads.rows(), 3 * width);
  Mat<S> dp(tokens, tokens), ds(tokens, tokens);
  for (int b = 0; b < batch_; ++b) {
    for (int h = 0; h < heads; ++h) {
      const Mat<S>& p = probs_[static_cast<size_t>(b) * heads + h];  // (key, query)
      auto q = qkv_cache.block(b * tokens, h * dh, tokens, dh);
      auto k = qkv_cache.block(b * tokens, width + h * dh, tokens, dh);
      auto v = qkv_cache.block(b * tokens, 2 * width + h * dh, tokens, dh);
      auto dout = dheads.block(b * tokens, h * dh, tokens, dh);

      dp.noalias() = v * dout.transpose();  // (key, query)
      for (int j = 0; j < tokens; ++j) {
        const S dot = p.col(j).dot(dp.col(j));
        ds.col(j) = (p.col(j).array() * (dp.col(j).array() - dot)).matrix();
      }
      dqkv.block(b * tokens, h * dh, tokens, dh).noalias() += ds.transpose() * k * scale;
      dqkv.block(b * tokens, width + h * dh, tokens, dh).noalias() += ds * q * scale;
      dqkv.block(b * tokens, 2 * width + h * dh, tokens, dh).noalias() += p * dout;
    }
  }
  return qkv.backward(dqkv);
}

// ---------------------------------------------------------------------------
// Block
// ---------------------------------------------------------------------------

template <typename S>
void Block<S>::create(ParamStore<S>& store, const std::string& name, int width, int heads,
                      int tokens, AttnMask mask, int mlp_ratio) {
  ln1.create(store, name + ".ln1", width);
  ln2.create(store, name + ".ln2", width);
  attn.create(store, name + ".attn", width, heads, tokens, mask);
  fc.create(store, name + ".fc", width, mlp_ratio * width);
  proj.create(store, name + ".proj", mlp_ratio * width, width);
}

template <typename S>
Mat<S> Block<S>::forward(const Mat<S>& x, const std::vector<uint8_t>* key_pad) {
  Mat<S> h = x + attn.forward(ln1.forward(x), key_pad);
  return h + proj.forward(gelu.forward(fc.forward(ln2.forward(h))));
}

template <typename S>
Mat<S> Block<S>::backward(const Mat<S>& dy) {
  Mat<S> dh = dy + ln2.backward(fc.backward(gelu.backward(proj.backward(dy))));
  return dh + ln1.backward(attn.backward(dh));
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

template <typename S>
void Embedding<S>::create(ParamStore<S>& store, const std::string& name, int vocab, int dim) {
  table = store.add(name, vocab, dim, /*decay=*/false);
}

template <typename S>
Mat<S> Embedding<S>::forward(const std::vector<int>& ids) {
  Mat<S> y(static_cast<Eigen::Index>(ids.size()), table->value.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table->value.rows())
      throw IdOutOfRangeError("embedding id " + std::to_string(ids[i]));
    y.row(static_cast<Eigen::Index>(i)) = table->value.row(ids[i]);
  }
  ids_cache_ = ids;
  return y;
}

template <typename S>
void Embedding<S>::backward(const Mat<S>& dy) {
  for (size_t i = 0; i < ids_cache_.size(); ++i)
    table->grad.row(ids_cache_[i]) += dy.row(static_cast<Eigen::Index>(i));
}

// ---------------------------------------------------------------------------
// L2Normalize
// ---------------------------------------------------------------------------

template <typename S>
Mat<S> L2Normalize<S>::forward(const Mat<S>& x) {
  const Eigen::Index n = x.rows();
  inv_norm_cache.resize(n);
  y_cache.resize(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    S norm = x.row(i).norm();
    S inv = S(1) / std::max(norm, static_cast<S>(1e-12));
    inv_norm_cache(i) = inv;
    y_cache.row(i) = x.row(i) * inv;
  }
  return y_cache;
}

template <typename S>
Mat<S> L2Normalize<S>::backward(const Mat<S>& dy) {
  Mat<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    S radial = dy.row(i).dot(y_cache.row(i));
    dx.row(i) = (dy.row(i) - y_cache.row(i) * radial) * inv_norm_cache(i);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

template <typename S>
void AdamW<S>::step(ParamStore<S>& store, double lr_now) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : store.all()) {
    auto g = p->grad.array();
    p->m = (cfg_.beta1 * p->m.array() + (1.0 - cfg_.beta1) * g).matrix();
    p->v = (cfg_.beta2 * p->v.array() + (1.0 - cfg_.beta2) * g.square()).matrix();
    auto mhat = p->m.array() / static_cast<S>(bc1);
    auto vhat = p->v.array() / static_cast<S>(bc2);
    p->value.array() -= static_cast<S>(lr_now) * mhat / (vhat.sqrt() + static_cast<S>(cfg_.eps));
    if (p->decay)
      p->value.array() -= static_cast<S>(lr_now * cfg_.weight_decay) * p->value.array();
  }
}

double cosine_lr(int64_t step, int64_t total_steps, double base_lr, int64_t warmup_steps) {
  if (total_steps <= 0) throw ConfigError("cosine_lr: total_steps must be positive");
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  int64_t span = std::max<int64_t>(1, total_steps - warmup_steps);
  double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  progress = std::min(progress, 1.0);
  return 0.5 * base_lr * (1.0 + std::cos(M_PI * progress));
}

// ---------------------------------------------------------------------------
// Explicit instantiations: float for training, double for gradient checks.
// ---------------------------------------------------------------------------

#define MADGRID_NN_INSTANTIATE(S)                                                  \
  template class ParamStore<S>;                                                    \
  template void init_normal<S>(Param<S>&, Rng&, double);                           \
  template struct Linear<S>;                                                       \
  template struct LayerNorm<S>;                                                    \
  template struct QuickGelu<S>;                                                    \
  template struct SelfAttention<S>;                                                \
  template struct Block<S>;                                                        \
  template struct Embedding<S>;                                                    \
  template struct L2Normalize<S>;                                                  \
  template class AdamW<S>;

MADGRID_NN_INSTANTIATE(float)
MADGRID_NN_INSTANTIATE(double)

#undef MADGRID_NN_INSTANTIATE

}  // namespace madgrid::nn
