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

#include "madgrid/tinyclip.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "madgrid/image.hpp"

namespace madgrid {

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"embed_dim", embed_dim},
                        {"image_resolution", image_resolution},
                        {"vision_layers", vision_layers},
                        {"vision_width", vision_width},
                        {"vision_heads", vision_heads},
                        {"vision_patch_size", vision_patch_size},
                        {"text_width", text_width},
                        {"text_layers", text_layers},
                        {"text_heads", text_heads},
                        {"context_length", context_length},
                        {"vocab_size", vocab_size},
                        {"temperature_init", temperature_init},
                        {"logit_scale_max", logit_scale_max}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.embed_dim = j.at("embed_dim").get<int>();
    c.image_resolution = j.at("image_resolution").get<int>();
    c.vision_layers = j.at("vision_layers").get<int>();
    c.vision_width = j.at("vision_width").get<int>();
    c.vision_heads = j.at("vision_heads").get<int>();
    c.vision_patch_size = j.at("vision_patch_size").get<int>();
    c.text_width = j.at("text_width").get<int>();
    c.text_layers = j.at("text_layers").get<int>();
    c.text_heads = j.at("text_heads").get<int>();
    c.context_length = j.at("context_length").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.temperature_init = j.at("temperature_init").get<double>();
    c.logit_scale_max = j.at("logit_scale_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

uint64_t ModelConfig::content_hash() const { return fnv1a64(to_json().dump() + "|model"); }

void ModelConfig::validate() const {
  if (embed_dim <= 0 || vision_layers <= 0 || vision_width <= 0 || text_layers <= 0 ||
      text_width <= 0 || context_length <= 0 || vocab_size <= 4)
    throw ConfigError("model config: sizes must be positive");
  if (vision_heads <= 0 || vision_width % vision_heads != 0)
    throw ConfigError("model config: vision_width must divide by vision_heads");
  if (text_heads <= 0 || text_width % text_heads != 0)
    throw ConfigError("model config: text_width must divide by text_heads");
  if (vision_patch_size <= 0 || image_resolution % vision_patch_size != 0)
    throw ConfigError("model config: patch size must divide the resolution");
  if (temperature_init <= 0.0 || logit_scale_max <= 1.0)
    throw ConfigError("model config: bad temperature settings");
}

// ---------------------------------------------------------------------------
// TinyClip
// ---------------------------------------------------------------------------

template <typename S>
TinyClip<S>::TinyClip(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const int vw = cfg_.vision_width;
  const int tw = cfg_.text_width;
  const int patch_dim = 3 * cfg_.vision_patch_size * cfg_.vision_patch_size;
  const int vtokens = cfg_.grid_tokens() + 1;

  // Initialization follows the usual dual-encoder recipe: attention and MLP
  // weights scaled by width, residual-output projections additionally by
  // depth, embeddings with small fixed scales.
  const double v_attn = 1.0 / std::sqrt(static_cast<double>(vw));
  const double v_resid = v_attn / std::sqrt(2.0 * cfg_.vision_layers);
  const double v_fc = 1.0 / std::sqrt(2.0 * static_cast<double>(vw));
  const double t_attn = 1.0 / std::sqrt(static_cast<double>(tw));
  const double t_resid = t_attn / std::sqrt(2.0 * cfg_.text_layers);
  const double t_fc = 1.0 / std::sqrt(2.0 * static_cast<double>(tw));

  patch_embed_.create(store_, "v.patch", patch_dim, vw, /*bias=*/false);
  nn::init_normal(*patch_embed_.w, rng, 1.0 / std::sqrt(static_cast<double>(patch_dim)));
  cls_ = store_.add("v.cls", 1, vw, /*decay=*/false);
  nn::init_normal(*cls_, rng, v_attn);
  vision_pos_ = store_.add("v.pos", vtokens, vw, /*decay=*/false);
  nn::init_normal(*vision_pos_, rng, v_attn);
  ln_pre_.create(store_, "v.ln_pre", vw);
  vision_blocks_.resize(cfg_.vision_layers);
  for (int l = 0; l < cfg_.vision_layers; ++l) {
    auto& blk = vision_blocks_[l];
    blk.create(store_, "v.blk" + std::to_string(l), vw, cfg_.vision_heads, vtokens,
               nn::AttnMask::kNone);
    nn::init_normal(*blk.attn.qkv.w, rng, v_attn);
    nn::init_normal(*blk.attn.out.w, rng, v_resid);
    nn::init_normal(*blk.fc.w, rng, v_fc);
    nn::init_normal(*blk.proj.w, rng, v_resid);
  }
  ln_post_.create(store_, "v.ln_post", vw);
  vision_proj_.create(store_, "v.proj", vw, cfg_.embed_dim, /*bias=*/false);
  nn::init_normal(*vision_proj_.w, rng, v_attn);

  token_embed_.create(store_, "t.tok", cfg_.vocab_size, tw);
  nn::init_normal(*token_embed_.table, rng, 0.02);
  text_pos_ = store_.add("t.pos", cfg_.context_length, tw, /*decay=*/false);
  nn::init_normal(*text_pos_, rng, 0.01);
  text_blocks_.resize(cfg_.text_layers);
  for (int l = 0; l < cfg_.text_layers; ++l) {
    auto& blk = text_blocks_[l];
    blk.create(store_, "t.blk" + std::to_string(l), tw, cfg_.text_heads, cfg_.context_length,
               nn::AttnMask::kCausal);
    nn::init_normal(*blk.attn.qkv.w, rng, t_attn);
    nn::init_normal(*blk.attn.out.w, rng, t_resid);
    nn::init_normal(*blk.fc.w, rng, t_fc);
    nn::init_normal(*blk.proj.w, rng, t_resid);
  }
  ln_final_.create(store_, "t.ln_final", tw);
  text_proj_.create(store_, "t.proj", tw, cfg_.embed_dim, /*bias=*/false);
  nn::init_normal(*text_proj_.w, rng, t_attn);

  scale_ = store_.add("logit_scale", 1, 1, /*decay=*/false);
  scale_->value(0, 0) = static_cast<S>(std::log(1.0 / cfg_.temperature_init));
}

template <typename S>
nn::Mat<S> TinyClip<S>::encode_images(const nn::Mat<S>& images) {
  const int res = cfg_.image_resolution;
  const int ps = cfg_.vision_patch_size;
  const int grid = res / ps;
  const int patches = grid * grid;
  const int patch_dim = 3 * ps * ps;
  const int tokens = patches + 1;
  if (images.cols() != static_cast<Eigen::Index>(res) * res * 3)
    throw ShapeMismatchError("encode_images: expected " + std::to_string(res * res * 3) +
                             " floats per row");
  if (images.rows() < 1) throw ShapeMismatchError("encode_images: empty batch");
  vision_batch_ = static_cast<int>(images.rows());

  // Assembled feature-major first so the innermost writes are contiguous in
  // column-major storage (the row-major fill pattern costs a cache miss per
  // element), then transposed once into row-per-patch layout.
  nn::Mat<S> patch_mat_t(patch_dim, static_cast<Eigen::Index>(vision_batch_) * patches);
  for (int b = 0; b < vision_batch_; ++b)
    for (int gy = 0; gy < grid; ++gy)
      for (int gx = 0; gx < grid; ++gx) {
        const Eigen::Index col = static_cast<Eigen::Index>(b) * patches + gy * grid + gx;
        for (int py = 0; py < ps; ++py)
          for (int px = 0; px < ps; ++px)
            for (int c = 0; c < 3; ++c)
              patch_mat_t((py * ps + px) * 3 + c, col) =
                  images(b, ((gy * ps + py) * res + gx * ps + px) * 3 + c);
      }
  nn::Mat<S> patch_mat = patch_mat_t.transpose();

  nn::Mat<S> embedded = patch_embed_.forward(patch_mat);
  nn::Mat<S> x(static_cast<Eigen::Index>(vision_batch_) * tokens, cfg_.vision_width);
  for (int b = 0; b < vision_batch_; ++b) {
    x.row(static_cast<Eigen::Index>(b) * tokens) = cls_->value.row(0);
    x.middleRows(static_cast<Eigen::Index>(b) * tokens + 1, patches) =
        embedded.middleRows(static_cast<Eigen::Index>(b) * patches, patches);
    x.middleRows(static_cast<Eigen::Index>(b) * tokens, tokens) += vision_pos_->value;
  }

  x = ln_pre_.forward(x);
  for (auto& blk : vision_blocks_) x = blk.forward(x);

  nn::Mat<S> cls_rows(vision_batch_, cfg_.vision_width);
  for (int b = 0; b < vision_batch_; ++b)
    cls_rows.row(b) = x.row(static_cast<Eigen::Index>(b) * tokens);
  return vision_norm_.forward(vision_proj_.forward(ln_post_.forward(cls_rows)));
}

template <typename S>
void TinyClip<S>::backward_images(const nn::Mat<S>& d_embed) {
  const int grid = cfg_.image_resolution / cfg_.vision_patch_size;
  const int patches = grid * grid;
  const int tokens = patches + 1;
  if (d_embed.rows() != vision_batch_)
    throw ShapeMismatchError("backward_images: batch mismatch");

  nn::Mat<S> d_cls_rows =
      ln_post_.backward(vision_proj_.backward(vision_norm_.backward(d_embed)));
  nn::Mat<S> dx = nn::Mat<S>::Zero(static_cast<Eigen::Index>(vision_batch_) * tokens,
                                   cfg_.vision_width);
  for (int b = 0; b < vision_batch_; ++b)
    dx.row(static_cast<Eigen::Index>(b) * tokens) = d_cls_rows.row(b);

  for (auto it = vision_blocks_.rbegin(); it != vision_blocks_.rend(); ++it)
    dx = it->backward(dx);
  dx = ln_pre_.backward(dx);

  nn::Mat<S> d_patches(static_cast<Eigen::Index>(vision_batch_) * patches, cfg_.vision_width);
  for (int b = 0; b < vision_batch_; ++b) {
    vision_pos_->grad += dx.middleRows(static_cast<Eigen::Index>(b) * tokens, tokens);
    cls_->grad.row(0) += dx.row(static_cast<Eigen::Index>(b) * tokens);
    d_patches.middleRows(static_cast<Eigen::Index>(b) * patches, patches) =
        dx.middleRows(static_cast<Eigen::Index>(b) * tokens + 1, patches);
  }
  patch_embed_.backward(d_patches);  // input gradient unused
}

template <typename S>
nn::Mat<S> TinyClip<S>::encode_texts(const std::vector<std::vector<int>>& ids) {
  const int ctx = cfg_.context_length;
  if (ids.empty()) throw ShapeMismatchError("encode_texts: empty batch");
  const int batch = static_cast<int>(ids.size());

  std::vector<int> flat(static_cast<size_t>(batch) * ctx, Vocabulary::kPadId);
  pad_mask_.assign(static_cast<size_t>(batch) * ctx, 0);
  end_pos_.assign(batch, -1);
  for (int i = 0; i < batch; ++i) {
    if (static_cast<int>(ids[i].size()) > ctx)
      throw ShapeMismatchError("encode_texts: sequence longer than context");
    for (size_t t = 0; t < ids[i].size(); ++t) flat[i * ctx + t] = ids[i][t];
    for (int t = 0; t < ctx; ++t) {
      if (flat[i * ctx + t] == Vocabulary::kPadId) pad_mask_[i * ctx + t] = 1;
      if (flat[i * ctx + t] == Vocabulary::kEndId && end_pos_[i] < 0) end_pos_[i] = t;
    }
    if (end_pos_[i] < 0) throw CorruptRecordError("encode_texts: sequence lacks <end>");
  }

  nn::Mat<S> x = token_embed_.forward(flat);
  for (int i = 0; i < batch; ++i)
    x.middleRows(static_cast<Eigen::Index>(i) * ctx, ctx) += text_pos_->value;
  for (auto& blk : text_blocks_) x = blk.forward(x, &pad_mask_);

  nn::Mat<S> gathered(batch, cfg_.text_width);
  for (int i = 0; i < batch; ++i)
    gathered.row(i) = x.row(static_cast<Eigen::Index>(i) * ctx + end_pos_[i]);
  return text_norm_.forward(text_proj_.forward(ln_final_.forward(gathered)));
}

template <typename S>
void TinyClip<S>::backward_texts(const nn::Mat<S>& d_embed) {
  const int ctx = cfg_.context_length;
  const int batch = static_cast<int>(end_pos_.size());
  if (d_embed.rows() != batch) throw ShapeMismatchError("backward_texts: batch mismatch");

  nn::Mat<S> d_gathered =
      ln_final_.backward(text_proj_.backward(text_norm_.backward(d_embed)));
  nn::Mat<S> dx =
      nn::Mat<S>::Zero(static_cast<Eigen::Index>(batch) * ctx, cfg_.text_width);
  for (int i = 0; i < batch; ++i)
    dx.row(static_cast<Eigen::Index>(i) * ctx + end_pos_[i]) = d_gathered.row(i);

  for (auto it = text_blocks_.rbegin(); it != text_blocks_.rend(); ++it) dx = it->backward(dx);
  for (int i = 0; i < batch; ++i)
    text_pos_->grad += dx.middleRows(static_cast<Eigen::Index>(i) * ctx, ctx);
  token_embed_.backward(dx);
}

template <typename S>
S TinyClip<S>::effective_scale() const {
  const double s = std::min(static_cast<double>(scale_->value(0, 0)),
                            std::log(cfg_.logit_scale_max));
  return static_cast<S>(std::exp(s));
}

template <typename S>
void TinyClip<S>::clamp_logit_scale() {
  const S cap = static_cast<S>(std::log(cfg_.logit_scale_max));
  if (scale_->value(0, 0) > cap) scale_->value(0, 0) = cap;
}

template <typename S>
nn::Mat<S> images_to_matrix(const std::vector<const PairRecord*>& records, int resolution) {
  const Eigen::Index cols = static_cast<Eigen::Index>(resolution) * resolution * 3;
  nn::Mat<S> m(static_cast<Eigen::Index>(records.size()), cols);
  for (size_t i = 0; i < records.size(); ++i) {
    if (static_cast<Eigen::Index>(records[i]->image_rgb.size()) != cols)
      throw ShapeMismatchError("images_to_matrix: record pixel size mismatch");
    for (Eigen::Index k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), k) = static_cast<S>(records[i]->image_rgb[k]) / S(255);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Contrastive loss
// ---------------------------------------------------------------------------

template <typename S>
S clip_loss(const nn::Mat<S>& img, const nn::Mat<S>& txt, int pairs,
            nn::Param<S>* logit_scale, double logit_scale_max, nn::Mat<S>* d_img,
            nn::Mat<S>* d_txt) {
  if (pairs < 2) throw BatchTooSmallError("contrastive loss needs at least 2 pairs");
  if (img.cols() != txt.cols()) throw ShapeMismatchError("clip_loss: embedding dim mismatch");
  if (img.rows() < pairs || txt.rows() < pairs)
    throw ShapeMismatchError("clip_loss: fewer rows than pairs");

  const double ln_max = std::log(logit_scale_max);
  const double s_raw = static_cast<double>(logit_scale->value(0, 0));
  const S scale = static_cast<S>(std::exp(std::min(s_raw, ln_max)));

  nn::Mat<S> sim = img * txt.transpose();
  nn::Mat<S> logits = scale * sim;
  nn::Mat<S> dlogits = nn::Mat<S>::Zero(logits.rows(), logits.cols());
  const S inv = S(1) / static_cast<S>(2 * pairs);

  S loss = 0;
  // Image -> text: each of the first `pairs` images against every text.
  for (int i = 0; i < pairs; ++i) {
    const S mx = logits.row(i).maxCoeff();
    auto shifted = (logits.row(i).array() - mx).eval();
    const S lse = mx + std::log(shifted.exp().sum());
    loss += (lse - logits(i, i)) * inv;
    dlogits.row(i) += (logits.row(i).array() - lse).exp().matrix() * inv;
    dlogits(i, i) -= inv;
  }
  // Text -> image: each of the first `pairs` texts against every image.
  for (int t = 0; t < pairs; ++t) {
    const S mx = logits.col(t).maxCoeff();
    auto shifted = (logits.col(t).array() - mx).eval();
    const S lse = mx + std::log(shifted.exp().sum());
    loss += (lse - logits(t, t)) * inv;
    dlogits.col(t) += (logits.col(t).array() - lse).exp().matrix() * inv;
    dlogits(t, t) -= inv;
  }

  if (d_img != nullptr) d_img->noalias() = scale * dlogits * txt;
  if (d_txt != nullptr) d_txt->noalias() = scale * dlogits.transpose() * img;
  // d logits / d raw_scale = logits while under the cap (clamp passes the
  // boundary point through, matching the usual clamp subgradient).
  if (s_raw <= ln_max)
    logit_scale->grad(0, 0) += (dlogits.array() * logits.array()).sum();
  return loss;
}

// ---------------------------------------------------------------------------
// Hard negatives
// ---------------------------------------------------------------------------

std::optional<HardNegative> make_hard_negative(const PairRecord& rec, Rng& rng) {
  std::vector<DescribedObject> objs = rec.described_objects();
  if (objs.size() != 2) return std::nullopt;

  std::vector<int> eligible;
  for (int c = 0; c < kCategoryCount; ++c) {
    if (objs[0].described[c] && objs[1].described[c] &&
        objs[0].attributes.value[c] != objs[1].attributes.value[c])
      eligible.push_back(c);
  }
  if (eligible.empty()) return std::nullopt;

  const int cat = eligible[rng.uniform_u32(static_cast<uint32_t>(eligible.size()))];
  HardNegative neg;
  neg.category = static_cast<AttrCategory>(cat);
  neg.objects = {objs[0], objs[1]};
  std::swap(neg.objects[0].attributes.value[cat], neg.objects[1].attributes.value[cat]);
  neg.tokens = render_caption({neg.objects[0], neg.objects[1]});
  neg.ids = tokenize(neg.tokens);
  return neg;
}

std::vector<uint8_t> render_swapped_image(const PairRecord& rec, const HardNegative& neg,
                                          const DigitStore& store, Rng& rng) {
  if (rec.caption_order.size() != 2)
    throw InvalidObjectCountError("swap image needs two captioned objects");
  std::vector<ObjectSpec> specs = rec.objects;
  const int a = rec.caption_order[0], b = rec.caption_order[1];
  const int cat = static_cast<int>(neg.category);
  std::swap(specs[a].attributes.value[cat], specs[b].attributes.value[cat]);

  std::vector<std::pair<Image, ObjectSpec>> rendered;
  rendered.reserve(specs.size());
  for (auto& spec : specs) {
    rendered.emplace_back(render_scene_object(store, spec, rng), spec);
  }
  return to_u8(compose_scene(rendered).pixels);
}

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"batch_size", batch_size}, {"epochs", epochs},
                        {"lr", lr},                 {"weight_decay", weight_decay},
                        {"warmup_steps", warmup_steps}, {"seed", seed},
                        {"negatives", negatives},   {"log_every", log_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.warmup_steps = j.at("warmup_steps").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.negatives = j.at("negatives").get<std::string>();
    c.log_every = j.at("log_every").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

uint64_t TrainConfig::content_hash() const { return fnv1a64(to_json().dump() + "|train"); }

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train config: batch_size must be at least 2");
  if (epochs < 1) throw ConfigError("train config: epochs must be positive");
  if (lr <= 0.0 || weight_decay < 0.0) throw ConfigError("train config: bad lr/weight decay");
  if (warmup_steps < 0) throw ConfigError("train config: warmup_steps must be non-negative");
  if (negatives != "none" && negatives != "text" && negatives != "text+image")
    throw ConfigError("train config: negatives must be none|text|text+image");
  if (log_every < 1) throw ConfigError("train config: log_every must be positive");
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

std::unique_ptr<TinyClip<float>> train_model(const ModelConfig& model_cfg,
                                             const TrainConfig& train_cfg,
                                             const std::vector<PairRecord>& records,
                                             const DigitStore* digits,
                                             std::vector<TrainLogRow>* log,
                                             const EpochObserver& on_epoch) {
  model_cfg.validate();
  train_cfg.validate();
  const int n = static_cast<int>(records.size());
  const int bs = train_cfg.batch_size;
  if (n < bs)
    throw BatchTooSmallError("training needs at least one full batch (" + std::to_string(n) +
                             " records, batch " + std::to_string(bs) + ")");
  if (train_cfg.negatives == "text+image" && digits == nullptr)
    throw ConfigError("text+image negatives need the digit store for re-rendering");

  const int steps_per_epoch = n / bs;
  const int64_t total_steps = static_cast<int64_t>(train_cfg.epochs) * steps_per_epoch;
  auto model = std::make_unique<TinyClip<float>>(model_cfg,
                                                 derive_seed(train_cfg.seed, 0xC0DE));

  nn::AdamWConfig opt_cfg;
  opt_cfg.lr = train_cfg.lr;
  opt_cfg.weight_decay = train_cfg.weight_decay;
  nn::AdamW<float> opt(opt_cfg);

  const int res = model_cfg.image_resolution;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  int64_t step = 0;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    Rng epoch_rng(derive_seed(train_cfg.seed, 0xE70C, static_cast<uint64_t>(epoch)));
    epoch_rng.shuffle(order);

    for (int bi = 0; bi < steps_per_epoch; ++bi, ++step) {
      Rng step_rng(derive_seed(train_cfg.seed, 0x57E9, static_cast<uint64_t>(step)));

      std::vector<const PairRecord*> batch(bs);
      for (int k = 0; k < bs; ++k) batch[k] = &records[order[bi * bs + k]];

      std::vector<std::vector<int>> texts;
      texts.reserve(2 * bs);
      for (const auto* r : batch) texts.push_back(r->caption_ids);

      std::vector<std::vector<uint8_t>> extra_images;
      if (train_cfg.negatives != "none") {
        for (const auto* r : batch) {
          auto neg = make_hard_negative(*r, step_rng);
          if (!neg.has_value()) continue;
          texts.push_back(neg->ids);
          if (train_cfg.negatives == "text+image")
            extra_images.push_back(render_swapped_image(*r, *neg, *digits, step_rng));
        }
      }

      nn::Mat<float> images(static_cast<Eigen::Index>(bs + extra_images.size()),
                            static_cast<Eigen::Index>(res) * res * 3);
      {
        std::vector<const PairRecord*> base(batch.begin(), batch.end());
        images.topRows(bs) = images_to_matrix<float>(base, res);
        for (size_t e = 0; e < extra_images.size(); ++e)
          for (Eigen::Index k = 0; k < images.cols(); ++k)
            images(bs + static_cast<Eigen::Index>(e), k) = extra_images[e][k] / 255.0f;
      }

      nn::Mat<float> img_e = model->encode_images(images);
      nn::Mat<float> txt_e = model->encode_texts(texts);

      model->params().zero_grads();
      nn::Mat<float> d_img, d_txt;
      const float loss = clip_loss<float>(img_e, txt_e, bs, model->logit_scale(),
                                          model_cfg.logit_scale_max, &d_img, &d_txt);
      if (!std::isfinite(loss))
        throw DivergenceError("loss became non-finite at step " + std::to_string(step));

      model->backward_images(d_img);
      model->backward_texts(d_txt);

      const double lr_now =
          nn::cosine_lr(step, total_steps, train_cfg.lr, train_cfg.warmup_steps);
      opt.step(model->params(), lr_now);
      model->clamp_logit_scale();

      if (log != nullptr && (step % train_cfg.log_every == 0 || step + 1 == total_steps))
        log->push_back({step, static_cast<double>(loss), lr_now,
                        static_cast<double>(model->effective_scale())});
    }
    if (on_epoch) on_epoch(epoch + 1, *model);
  }
  return model;
}

double in_batch_retrieval(TinyClip<float>& model, const std::vector<PairRecord>& records) {
  const int n = static_cast<int>(records.size());
  if (n < 2) throw BatchTooSmallError("retrieval needs at least 2 records");
  const int res = model.config().image_resolution;

  nn::Mat<float> img_e(n, model.config().embed_dim);
  nn::Mat<float> txt_e(n, model.config().embed_dim);
  const int chunk = 64;
  for (int base = 0; base < n; base += chunk) {
    const int m = std::min(chunk, n - base);
    std::vector<const PairRecord*> recs(m);
    std::vector<std::vector<int>> texts(m);
    for (int i = 0; i < m; ++i) {
      recs[i] = &records[base + i];
      texts[i] = records[base + i].caption_ids;
    }
    img_e.middleRows(base, m) = model.encode_images(images_to_matrix<float>(recs, res));
    txt_e.middleRows(base, m) = model.encode_texts(texts);
  }

  nn::Mat<float> sim = img_e * txt_e.transpose();
  int hit_i2t = 0, hit_t2i = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Index best;
    sim.row(i).maxCoeff(&best);
    if (best == i) ++hit_i2t;
    sim.col(i).maxCoeff(&best);
    if (best == i) ++hit_t2i;
  }
  return 0.5 * (hit_i2t + hit_t2i) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'M', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr const char* kCkptVersion = "madgrid-ckpt-1";

void append_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t read_u32(const std::string& buf, size_t& off) {
  if (off + 4 > buf.size()) throw CorruptRecordError("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[off + i])) << (8 * i);
  off += 4;
  return v;
}

std::string vocab_hash_hex() { return hex64(fnv1a64(Vocabulary::instance().to_json())); }

}  // namespace

void save_checkpoint(const std::string& path, TinyClip<float>& model,
                     const nlohmann::json& extra) {
  nlohmann::json header{{"version", kCkptVersion},
                        {"model", model.config().to_json()},
                        {"vocab_hash", vocab_hash_hex()},
                        {"extra", extra}};
  const std::string header_str = header.dump();

  std::string body;
  append_u32(body, static_cast<uint32_t>(header_str.size()));
  body += header_str;
  const auto& params = model.params().all();
  append_u32(body, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    append_u32(body, static_cast<uint32_t>(p->name.size()));
    body += p->name;
    append_u32(body, static_cast<uint32_t>(p->value.rows()));
    append_u32(body, static_cast<uint32_t>(p->value.cols()));
    const size_t bytes = sizeof(float) * static_cast<size_t>(p->value.size());
    const size_t off = body.size();
    body.resize(off + bytes);
    std::memcpy(body.data() + off, p->value.data(), bytes);
  }

  std::string blob(kCkptMagic, sizeof(kCkptMagic));
  blob += body;
  const uint64_t hash = fnv1a64(body);
  for (int i = 0; i < 8; ++i) blob.push_back(static_cast<char>((hash >> (8 * i)) & 0xff));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw IoError("short write: " + path);
}

std::unique_ptr<TinyClip<float>> load_checkpoint(const std::string& path,
                                                 nlohmann::json* extra) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (blob.size() < sizeof(kCkptMagic) + 8 ||
      std::memcmp(blob.data(), kCkptMagic, sizeof(kCkptMagic)) != 0)
    throw CorruptRecordError("not a checkpoint: " + path);
  const std::string body = blob.substr(sizeof(kCkptMagic), blob.size() - sizeof(kCkptMagic) - 8);
  uint64_t stored_hash = 0;
  for (int i = 0; i < 8; ++i)
    stored_hash |= static_cast<uint64_t>(static_cast<uint8_t>(blob[blob.size() - 8 + i]))
                   << (8 * i);
  if (fnv1a64(body) != stored_hash) throw CorruptRecordError("checkpoint hash mismatch");

  size_t off = 0;
  const uint32_t header_len = read_u32(body, off);
  if (off + header_len > body.size()) throw CorruptRecordError("checkpoint truncated");
  nlohmann::json header = nlohmann::json::parse(body.substr(off, header_len), nullptr, false);
  off += header_len;
  if (header.is_discarded()) throw CorruptRecordError("checkpoint header is not JSON");
  if (header.value("version", "") != kCkptVersion)
    throw ManifestMismatchError("checkpoint version mismatch");
  if (header.value("vocab_hash", "") != vocab_hash_hex())
    throw ManifestMismatchError("checkpoint vocabulary mismatch");

  ModelConfig cfg = ModelConfig::from_json(header.at("model"));
  auto model = std::make_unique<TinyClip<float>>(cfg, /*init_seed=*/0);

  const uint32_t n_params = read_u32(body, off);
  if (n_params != model->params().all().size())
    throw ManifestMismatchError("checkpoint parameter count mismatch");
  for (uint32_t i = 0; i < n_params; ++i) {
    const uint32_t name_len = read_u32(body, off);
    if (off + name_len > body.size()) throw CorruptRecordError("checkpoint truncated");
    const std::string name = body.substr(off, name_len);
    off += name_len;
    const uint32_t rows = read_u32(body, off);
    const uint32_t cols = read_u32(body, off);
    nn::Param<float>* p = model->params().find(name);
    if (p == nullptr) throw ManifestMismatchError("unknown checkpoint parameter: " + name);
    if (p->value.rows() != static_cast<Eigen::Index>(rows) ||
        p->value.cols() != static_cast<Eigen::Index>(cols))
      throw ManifestMismatchError("checkpoint shape mismatch for " + name);
    const size_t bytes = sizeof(float) * static_cast<size_t>(rows) * cols;
    if (off + bytes > body.size()) throw CorruptRecordError("checkpoint truncated");
    std::memcpy(p->value.data(), body.data() + off, bytes);
    off += bytes;
  }
  if (extra != nullptr) *extra = header.value("extra", nlohmann::json::object());
  return model;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

template class TinyClip<float>;
template class TinyClip<double>;
template nn::Mat<float> images_to_matrix<float>(const std::vector<const PairRecord*>&, int);
template nn::Mat<double> images_to_matrix<double>(const std::vector<const PairRecord*>&, int);
template float clip_loss<float>(const nn::Mat<float>&, const nn::Mat<float>&, int,
                                nn::Param<float>*, double, nn::Mat<float>*, nn::Mat<float>*);
template double clip_loss<double>(const nn::Mat<double>&, const nn::Mat<double>&, int,
                                  nn::Param<double>*, double, nn::Mat<double>*,
                                  nn::Mat<double>*);

}  // namespace madgrid
