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

#include "madgrid/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "madgrid/png_io.hpp"

namespace fs = std::filesystem;

namespace madgrid {

namespace {

constexpr int kRejectionBudget = 1000;

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ConfigError(std::string(name) + " must lie in [0,1], got " + std::to_string(p));
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// DataConfig
// ---------------------------------------------------------------------------

DigitSplit DataConfig::digit_split() const {
  if (mnist_split == "train") return DigitSplit::kTrain;
  if (mnist_split == "test") return DigitSplit::kTest;
  throw ConfigError("mnist_split must be train or test, got '" + mnist_split + "'");
}

void DataConfig::validate() const {
  check_probability(p_two_obj_img, "p_two_obj_img");
  check_probability(p_two_obj_cap, "p_two_obj_cap");
  check_probability(p_saliency, "p_saliency");
  if (!(attr_mean >= 0.0 && attr_mean <= 6.0))
    throw ConfigError("attr_mean must lie in [0,6], got " + std::to_string(attr_mean));
  if (n_samples <= 0) throw ConfigError("n_samples must be positive");
  if (split != "train" && split != "test" && split != "ood-test")
    throw ConfigError("split must be train, test or ood-test, got '" + split + "'");
  digit_split();  // validates mnist_split
}

nlohmann::json DataConfig::to_json() const {
  return {
      {"p_two_obj_img", p_two_obj_img},
      {"p_two_obj_cap", p_two_obj_cap},
      {"attr_mean", attr_mean},
      {"p_saliency", p_saliency},
      {"n_samples", n_samples},
      {"split", split},
      {"mnist_split", mnist_split},
      {"seed", seed},
  };
}

DataConfig DataConfig::from_json(const nlohmann::json& j) {
  DataConfig cfg;
  try {
    cfg.p_two_obj_img = j.at("p_two_obj_img").get<double>();
    cfg.p_two_obj_cap = j.at("p_two_obj_cap").get<double>();
    cfg.attr_mean = j.at("attr_mean").get<double>();
    cfg.p_saliency = j.at("p_saliency").get<double>();
    cfg.n_samples = j.at("n_samples").get<int>();
    cfg.split = j.at("split").get<std::string>();
    cfg.mnist_split = j.at("mnist_split").get<std::string>();
    cfg.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad DataConfig json: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

uint64_t DataConfig::content_hash() const {
  return fnv1a64(to_json().dump() + "|" + kGeneratorVersion);
}

DataConfig DataConfig::realistic() {
  DataConfig cfg;
  cfg.p_two_obj_img = 0.95;
  cfg.p_two_obj_cap = 0.6;
  cfg.attr_mean = 0.57;
  cfg.p_saliency = 0.9;
  return cfg;
}

DataConfig DataConfig::ideal() {
  DataConfig cfg;
  cfg.p_two_obj_img = 1.0;
  cfg.p_two_obj_cap = 1.0;
  cfg.attr_mean = 3.5;
  cfg.p_saliency = 0.0;
  return cfg;
}

DataConfig DataConfig::base() {
  DataConfig cfg;
  cfg.p_two_obj_img = 1.0;
  cfg.p_two_obj_cap = 1.0;
  cfg.attr_mean = 1.8;
  cfg.p_saliency = 0.0;
  return cfg;
}

// ---------------------------------------------------------------------------
// OodSpec
// ---------------------------------------------------------------------------

const OodSpec& OodSpec::standard() {
  static OodSpec spec = [] {
    OodSpec s;
    const auto& cat = AttributeCatalog::instance();
    auto color = [&](const char* name) { return cat.value_index(AttrCategory::kColor, name); };
    auto scale = [&](const char* name) { return cat.value_index(AttrCategory::kScaling, name); };
    for (int digit : {0, 3})
      for (const char* c : {"green", "red"})
        s.excluded.push_back({AttrCategory::kColor, color(c), digit});
    for (int digit : {4, 5})
      for (const char* c : {"blue", "magenta"})
        s.excluded.push_back({AttrCategory::kColor, color(c), digit});
    for (int digit : {3, 7}) s.excluded.push_back({AttrCategory::kScaling, scale("large"), digit});
    for (int digit : {4, 9}) s.excluded.push_back({AttrCategory::kScaling, scale("small"), digit});
    return s;
  }();
  return spec;
}

bool OodSpec::matches(int digit_class, const AttributeAssignment& a) const {
  for (const auto& e : excluded)
    if (e.digit_class == digit_class && a.value_of(e.category) == e.value_index) return true;
  return false;
}

// ---------------------------------------------------------------------------
// PairRecord
// ---------------------------------------------------------------------------

std::vector<DescribedObject> PairRecord::described_objects() const {
  std::vector<DescribedObject> out;
  for (size_t k = 0; k < caption_order.size(); ++k) {
    const ObjectSpec& spec = objects.at(caption_order[k]);
    out.push_back({spec.digit_class, spec.attributes, described.at(k)});
  }
  return out;
}

nlohmann::json PairRecord::meta_json() const {
  const auto& catalog = AttributeCatalog::instance();
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : objects) {
    nlohmann::json attrs;
    for (AttrCategory c : kAllCategories)
      attrs[catalog.category(c).name] = o.attributes.value_name(c);
    objs.push_back({{"digit", o.digit_class},
                    {"source", o.source_index},
                    {"cell", o.cell},
                    {"salient", o.salient},
                    {"attributes", attrs}});
  }
  nlohmann::json desc = nlohmann::json::array();
  for (const auto& mask : described) {
    nlohmann::json names = nlohmann::json::array();
    for (AttrCategory c : kAllCategories)
      if (mask[static_cast<int>(c)]) names.push_back(catalog.category(c).name);
    desc.push_back(names);
  }
  return {{"id", id},
          {"caption", join_tokens(caption_tokens)},
          {"caption_ids", caption_ids},
          {"objects", objs},
          {"caption_order", caption_order},
          {"described", desc},
          {"salient", salient}};
}

PairRecord PairRecord::from_meta_json(const nlohmann::json& j, std::vector<uint8_t> png_bytes) {
  const auto& catalog = AttributeCatalog::instance();
  PairRecord rec;
  try {
    rec.id = j.at("id").get<int64_t>();
    rec.caption_tokens = split_tokens(j.at("caption").get<std::string>());
    rec.caption_ids = j.at("caption_ids").get<std::vector<int>>();
    for (const auto& jo : j.at("objects")) {
      ObjectSpec o;
      o.digit_class = jo.at("digit").get<int>();
      o.source_index = jo.at("source").get<int>();
      o.cell = jo.at("cell").get<int>();
      o.salient = jo.at("salient").get<bool>();
      for (const auto& [name, value] : jo.at("attributes").items()) {
        AttrCategory c = catalog.category_by_name(name);
        o.attributes.set(c, catalog.value_index(c, value.get<std::string>()));
      }
      rec.objects.push_back(o);
    }
    rec.caption_order = j.at("caption_order").get<std::vector<int>>();
    for (const auto& names : j.at("described")) {
      std::array<bool, kCategoryCount> mask{};
      for (const auto& name : names)
        mask[static_cast<int>(catalog.category_by_name(name.get<std::string>()))] = true;
      rec.described.push_back(mask);
    }
    rec.salient = j.at("salient").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptRecordError(std::string("bad record metadata: ") + e.what());
  }
  if (rec.caption_ids != tokenize(rec.caption_tokens))
    throw CorruptRecordError("caption ids disagree with caption tokens");
  if (rec.caption_order.size() != rec.described.size())
    throw CorruptRecordError("caption_order/described length mismatch");

  Image img = decode_png(png_bytes.data(), png_bytes.size());
  if (img.width != kCanvasSize || img.height != kCanvasSize || img.channels != 3)
    throw CorruptRecordError("record image is not 96x96 RGB");
  rec.image_rgb = to_u8(img);
  return rec;
}

// ---------------------------------------------------------------------------
// Pair sampling
// ---------------------------------------------------------------------------

namespace {

// Uniformly draws an object's identity; OOD filtering happens in the callers.
ObjectSpec draw_object(const DigitStore& store, Rng& rng) {
  ObjectSpec o;
  o.digit_class = static_cast<int>(rng.uniform_u32(10));
  o.source_index = static_cast<int>(rng.uniform_u32(store.class_count(o.digit_class)));
  o.attributes = AttributeAssignment::sample_uniform(rng);
  return o;
}

ObjectSpec draw_in_distribution_object(const OodSpec& ood, const DigitStore& store, Rng& rng) {
  for (int attempt = 0; attempt < kRejectionBudget; ++attempt) {
    ObjectSpec o = draw_object(store, rng);
    if (!ood.matches(o.digit_class, o.attributes)) return o;
  }
  throw RejectionBudgetError("in-distribution object rejection budget exhausted");
}

std::vector<ObjectSpec> draw_objects_for_split(const std::string& split, int n_obj,
                                               const OodSpec& ood, const DigitStore& store,
                                               Rng& rng) {
  if (split == "ood-test") {
    // Sample-level rejection: at least one object must hit an excluded pair.
    for (int attempt = 0; attempt < kRejectionBudget; ++attempt) {
      std::vector<ObjectSpec> objs;
      bool any = false;
      for (int i = 0; i < n_obj; ++i) {
        objs.push_back(draw_object(store, rng));
        any = any || ood.matches(objs.back().digit_class, objs.back().attributes);
      }
      if (any) return objs;
    }
    throw RejectionBudgetError("ood-test sample rejection budget exhausted");
  }
  std::vector<ObjectSpec> objs;
  for (int i = 0; i < n_obj; ++i) objs.push_back(draw_in_distribution_object(ood, store, rng));
  return objs;
}

}  // namespace

PairStructure sample_pair_structure(const DataConfig& cfg, const OodSpec& ood,
                                    const DigitStore& store, Rng& rng) {
  PairStructure s;
  const bool two_img = rng.bernoulli(cfg.p_two_obj_img);
  const int n_obj = two_img ? 2 : 1;
  s.salient = rng.bernoulli(cfg.p_saliency);
  s.specs = draw_objects_for_split(cfg.split, n_obj, ood, store, rng);
  s.specs[0].salient = s.salient;

  // Which objects the caption describes; the salient object (always index 0)
  // is always captioned, and captioned first.
  if (n_obj == 1) {
    s.caption_order = {0};
  } else if (rng.bernoulli(cfg.p_two_obj_cap)) {
    s.caption_order = {0, 1};
  } else {
    s.caption_order = {s.salient ? 0 : static_cast<int>(rng.uniform_u32(2))};
  }

  const AttrCountDistribution dist = cfg.attr_dist();
  for (size_t k = 0; k < s.caption_order.size(); ++k)
    s.described.push_back(sample_attr_subset(dist.sample(rng), rng));
  return s;
}

Image render_scene_object(const DigitStore& store, ObjectSpec& spec, Rng& rng) {
  for (int attempt = 0; attempt < kRejectionBudget; ++attempt) {
    try {
      Image digit = store.image(spec.digit_class, spec.source_index);
      return render_object(digit, spec.attributes, rng);
    } catch (const EmptyImageError&) {
      spec.source_index = static_cast<int>(
          rng.uniform_u32(static_cast<uint32_t>(store.class_count(spec.digit_class))));
    }
  }
  throw RejectionBudgetError("no renderable instance of digit class " +
                             std::to_string(spec.digit_class));
}

PairRecord sample_pair(const DataConfig& cfg, const OodSpec& ood, const DigitStore& store,
                       int64_t sample_id, Rng& rng) {
  PairStructure s = sample_pair_structure(cfg, ood, store, rng);

  std::vector<std::pair<Image, ObjectSpec>> rendered;
  for (auto& spec : s.specs) {
    rendered.emplace_back(render_scene_object(store, spec, rng), spec);
  }
  SceneImage scene = place_objects(rendered, s.salient, rng);

  PairRecord rec;
  rec.id = sample_id;
  rec.objects = scene.objects;
  rec.caption_order = s.caption_order;
  rec.described = s.described;
  rec.salient = s.salient;
  rec.caption_tokens = render_caption(rec.described_objects());
  rec.caption_ids = tokenize(rec.caption_tokens);
  rec.image_rgb = to_u8(scene.pixels);
  return rec;
}

// ---------------------------------------------------------------------------
// Eval sets
// ---------------------------------------------------------------------------

void EvalConfig::validate() const {
  if (n_records <= 0) throw ConfigError("n_records must be positive");
  if (split != "test" && split != "ood-test")
    throw ConfigError("eval split must be test or ood-test, got '" + split + "'");
  if (mnist_split != "train" && mnist_split != "test")
    throw ConfigError("mnist_split must be train or test");
  if (target != "object") AttributeCatalog::instance().category_by_name(target);
}

nlohmann::json EvalConfig::to_json() const {
  return {{"target", target},
          {"n_records", n_records},
          {"split", split},
          {"mnist_split", mnist_split},
          {"seed", seed}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig cfg;
  try {
    cfg.target = j.at("target").get<std::string>();
    cfg.n_records = j.at("n_records").get<int>();
    cfg.split = j.at("split").get<std::string>();
    cfg.mnist_split = j.at("mnist_split").get<std::string>();
    cfg.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad EvalConfig json: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

uint64_t EvalConfig::content_hash() const {
  return fnv1a64(to_json().dump() + "|" + kGeneratorVersion);
}

std::vector<PairRecord> build_eval_set(const EvalConfig& cfg, const OodSpec& ood,
                                       const DigitStore& store) {
  cfg.validate();
  const bool object_target = cfg.target == "object";
  const auto& catalog = AttributeCatalog::instance();
  const AttrCategory target_cat =
      object_target ? AttrCategory::kThickness : catalog.category_by_name(cfg.target);

  std::vector<PairRecord> records;
  records.reserve(cfg.n_records);
  for (int i = 0; i < cfg.n_records; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(i)));
    const int n_a = (i % 2 == 0) ? 3 : 4;

    std::vector<ObjectSpec> specs;
    bool accepted = false;
    for (int attempt = 0; attempt < kRejectionBudget && !accepted; ++attempt) {
      specs = draw_objects_for_split(cfg.split, 2, ood, store, rng);
      accepted = object_target
                     ? specs[0].digit_class != specs[1].digit_class
                     : specs[0].attributes.value_of(target_cat) !=
                           specs[1].attributes.value_of(target_cat);
    }
    if (!accepted) throw RejectionBudgetError("eval record rejection budget exhausted");

    std::vector<std::pair<Image, ObjectSpec>> rendered;
    for (auto& spec : specs) {
      rendered.emplace_back(render_scene_object(store, spec, rng), spec);
    }
    SceneImage scene = place_objects(rendered, false, rng);

    PairRecord rec;
    rec.id = i;
    rec.objects = scene.objects;
    rec.caption_order = {0, 1};
    rec.salient = false;
    for (int k = 0; k < 2; ++k) {
      std::array<bool, kCategoryCount> mask{};
      if (object_target) {
        mask = sample_attr_subset(n_a, rng);
      } else {
        mask[static_cast<int>(target_cat)] = true;
        std::vector<int> others;
        for (int c = 0; c < kCategoryCount; ++c)
          if (c != static_cast<int>(target_cat)) others.push_back(c);
        rng.shuffle(others);
        for (int j = 0; j < n_a - 1; ++j) mask[others[j]] = true;
      }
      rec.described.push_back(mask);
    }
    rec.caption_tokens = render_caption(rec.described_objects());
    rec.caption_ids = tokenize(rec.caption_tokens);
    rec.image_rgb = to_u8(scene.pixels);
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Shard serialization
// ---------------------------------------------------------------------------

namespace {

void append_u32le(std::vector<uint8_t>& buf, uint32_t v) {
  buf.push_back(v & 0xff);
  buf.push_back((v >> 8) & 0xff);
  buf.push_back((v >> 16) & 0xff);
  buf.push_back((v >> 24) & 0xff);
}

uint32_t read_u32le(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

uint64_t hash_bytes(const std::vector<uint8_t>& buf) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(buf.data()), buf.size()));
}

std::vector<uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

void write_shards(const std::string& dir, const std::string& kind, const nlohmann::json& config,
                  uint64_t config_hash, const std::vector<PairRecord>& records) {
  fs::create_directories(dir);
  nlohmann::json shards = nlohmann::json::array();
  for (size_t start = 0, index = 0; start < records.size(); start += kShardCapacity, ++index) {
    size_t end = std::min(records.size(), start + kShardCapacity);
    std::vector<uint8_t> buf;
    for (size_t r = start; r < end; ++r) {
      std::string meta = records[r].meta_json().dump();
      std::vector<uint8_t> png = encode_png_rgb8(records[r].image_rgb, kCanvasSize, kCanvasSize);
      append_u32le(buf, static_cast<uint32_t>(meta.size()));
      buf.insert(buf.end(), meta.begin(), meta.end());
      append_u32le(buf, static_cast<uint32_t>(png.size()));
      buf.insert(buf.end(), png.begin(), png.end());
    }
    char name[32];
    snprintf(name, sizeof(name), "shard-%03zu.bin", index);
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw IoError("cannot write shard in " + dir);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    shards.push_back({{"file", name},
                      {"n", end - start},
                      {"bytes", buf.size()},
                      {"payload_hash", hex64(hash_bytes(buf))}});
  }
  nlohmann::json manifest = {{"kind", kind},
                             {"version", kGeneratorVersion},
                             {"config", config},
                             {"config_hash", hex64(config_hash)},
                             {"n_records", records.size()},
                             {"shards", shards}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

nlohmann::json read_manifest(const std::string& dir) {
  fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestMismatchError(std::string("unparseable manifest: ") + e.what());
  }
  return manifest;
}

std::vector<PairRecord> read_shards(const std::string& dir) {
  nlohmann::json manifest = read_manifest(dir);
  try {
    if (manifest.at("version").get<std::string>() != kGeneratorVersion)
      throw ManifestMismatchError("generator version mismatch");
    uint64_t expect_hash =
        fnv1a64(manifest.at("config").dump() + "|" + kGeneratorVersion);
    if (manifest.at("config_hash").get<std::string>() != hex64(expect_hash))
      throw ManifestMismatchError("config hash mismatch");

    std::vector<PairRecord> records;
    records.reserve(manifest.at("n_records").get<size_t>());
    for (const auto& shard : manifest.at("shards")) {
      std::vector<uint8_t> buf = read_file_bytes(fs::path(dir) / shard.at("file").get<std::string>());
      if (buf.size() != shard.at("bytes").get<size_t>() ||
          hex64(hash_bytes(buf)) != shard.at("payload_hash").get<std::string>())
        throw ManifestMismatchError("shard payload hash mismatch for " +
                                    shard.at("file").get<std::string>());
      size_t pos = 0, n = 0;
      while (pos < buf.size()) {
        if (pos + 4 > buf.size()) throw CorruptRecordError("truncated record header");
        uint32_t meta_len = read_u32le(buf.data() + pos);
        pos += 4;
        if (pos + meta_len + 4 > buf.size()) throw CorruptRecordError("truncated metadata");
        nlohmann::json meta;
        try {
          meta = nlohmann::json::parse(buf.begin() + pos, buf.begin() + pos + meta_len);
        } catch (const nlohmann::json::exception& e) {
          throw CorruptRecordError(std::string("unparseable record metadata: ") + e.what());
        }
        pos += meta_len;
        uint32_t png_len = read_u32le(buf.data() + pos);
        pos += 4;
        if (pos + png_len > buf.size()) throw CorruptRecordError("truncated image payload");
        std::vector<uint8_t> png(buf.begin() + pos, buf.begin() + pos + png_len);
        pos += png_len;
        records.push_back(PairRecord::from_meta_json(meta, std::move(png)));
        ++n;
      }
      if (n != shard.at("n").get<size_t>())
        throw ManifestMismatchError("record count mismatch in " +
                                    shard.at("file").get<std::string>());
    }
    if (records.size() != manifest.at("n_records").get<size_t>())
      throw ManifestMismatchError("total record count mismatch");
    return records;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestMismatchError(std::string("bad manifest fields: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Top-level generation
// ---------------------------------------------------------------------------

void generate_dataset(const DataConfig& cfg, const DigitStore& store, const std::string& dir) {
  cfg.validate();
  const OodSpec& ood = OodSpec::standard();
  std::vector<PairRecord> records;
  records.reserve(cfg.n_samples);
  for (int64_t id = 0; id < cfg.n_samples; ++id) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(id)));
    records.push_back(sample_pair(cfg, ood, store, id, rng));
  }
  write_shards(dir, "dataset", cfg.to_json(), cfg.content_hash(), records);
}

void generate_eval_set(const EvalConfig& cfg, const DigitStore& store, const std::string& dir) {
  std::vector<PairRecord> records = build_eval_set(cfg, OodSpec::standard(), store);
  write_shards(dir, "evalset", cfg.to_json(), cfg.content_hash(), records);
}

}  // namespace madgrid
