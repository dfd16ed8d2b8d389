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

#include "madgrid/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "madgrid/png_io.hpp"

namespace fs = std::filesystem;

namespace madgrid {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string hex16(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

uint64_t run_hash(const DataConfig& data, const ModelConfig& model, const TrainConfig& train) {
  const nlohmann::json j{{"data", data.to_json()},
                         {"model", model.to_json()},
                         {"train", train.to_json()},
                         {"generator", kGeneratorVersion},
                         {"harness", kHarnessVersion}};
  return fnv1a64(j.dump());
}

uint64_t eval_hash_of(const std::string& checkpoint_hash, const EvalConfig& ec) {
  const nlohmann::json j{
      {"checkpoint", checkpoint_hash}, {"evalset", ec.to_json()}, {"harness", kHarnessVersion}};
  return fnv1a64(j.dump());
}

void write_text_atomic(const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out.good()) throw IoError("cannot write " + tmp.string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
  }
  fs::rename(tmp, path);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNan;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double ci_of(const std::vector<double>& v) {
  return v.size() >= 2 ? aggregate_seeds(v).ci_half_width : 0.0;
}

// json <-> double with NaN mapped to null.
nlohmann::json num_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double null_or_num(const nlohmann::json& j) { return j.is_null() ? kNan : j.get<double>(); }

const std::vector<std::string>& knob_names() {
  static const std::vector<std::string> names = {"p_two_obj_img", "p_two_obj_cap", "attr_mean",
                                                 "p_saliency"};
  return names;
}

}  // namespace

std::string default_cache_dir() {
  if (const char* env = std::getenv("MADGRID_CACHE_DIR")) return env;
  if (const char* home = std::getenv("HOME")) {
    return (fs::path(home) / ".cache" / "madgrid").string();
  }
  return ".madgrid-cache";
}

// ---------------------------------------------------------------------------
// ExperimentSpec
// ---------------------------------------------------------------------------

nlohmann::json ExperimentSpec::to_json() const {
  return {{"name", name},
          {"data", data.to_json()},
          {"sweep_property", sweep_property},
          {"sweep_values", sweep_values},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"seeds", seeds},
          {"eval_targets", eval_targets},
          {"eval_records", eval_records},
          {"eval_seed", eval_seed},
          {"eval_ood", eval_ood},
          {"out_dir", out_dir}};
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j) {
  ExperimentSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.data = DataConfig::from_json(j.at("data"));
    spec.sweep_property = j.at("sweep_property").get<std::string>();
    spec.sweep_values = j.at("sweep_values").get<std::vector<double>>();
    spec.model = ModelConfig::from_json(j.at("model"));
    spec.train = TrainConfig::from_json(j.at("train"));
    spec.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    spec.eval_targets = j.at("eval_targets").get<std::vector<std::string>>();
    spec.eval_records = j.at("eval_records").get<int>();
    spec.eval_seed = j.at("eval_seed").get<uint64_t>();
    spec.eval_ood = j.at("eval_ood").get<bool>();
    spec.out_dir = j.at("out_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

void ExperimentSpec::validate() const {
  if (name.empty()) throw ConfigError("experiment spec: name must not be empty");
  data.validate();
  model.validate();
  train.validate();
  if (!sweep_property.empty()) {
    const auto& knobs = knob_names();
    if (std::find(knobs.begin(), knobs.end(), sweep_property) == knobs.end()) {
      throw ConfigError("experiment spec: unknown sweep property '" + sweep_property + "'");
    }
    if (sweep_values.empty()) {
      throw ConfigError("experiment spec: sweep_values empty for property '" + sweep_property +
                        "'");
    }
  } else if (!sweep_values.empty()) {
    throw ConfigError("experiment spec: sweep_values given without sweep_property");
  }
  if (seeds.empty()) throw ConfigError("experiment spec: seeds must not be empty");
  if (eval_targets.empty()) throw ConfigError("experiment spec: eval_targets must not be empty");
  for (const auto& t : eval_targets) {
    try {
      resolve_eval_target(t);
    } catch (const UnknownAttributeError&) {
      throw ConfigError("experiment spec: unknown eval target '" + t + "'");
    }
  }
  if (eval_records < 1) throw ConfigError("experiment spec: eval_records must be positive");
}

DataConfig with_property(DataConfig base, const std::string& property, double value) {
  if (property == "p_two_obj_img") {
    base.p_two_obj_img = value;
  } else if (property == "p_two_obj_cap") {
    base.p_two_obj_cap = value;
  } else if (property == "attr_mean") {
    base.attr_mean = value;
  } else if (property == "p_saliency") {
    base.p_saliency = value;
  } else {
    throw ConfigError("unknown data property '" + property +
                      "' (knobs: p_two_obj_img, p_two_obj_cap, attr_mean, p_saliency)");
  }
  base.validate();
  return base;
}

void check_sweep_isolation(const std::vector<DataConfig>& cells, const std::string& property) {
  if (cells.size() < 2) return;
  nlohmann::json ref = cells.front().to_json();
  if (!ref.contains(property)) throw ConfigError("not a data property: '" + property + "'");
  ref.erase(property);
  for (size_t i = 1; i < cells.size(); ++i) {
    nlohmann::json other = cells[i].to_json();
    other.erase(property);
    if (other != ref) {
      throw ConfigError("sweep cells differ outside the swept property '" + property + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Results plumbing
// ---------------------------------------------------------------------------

nlohmann::json CellProvenance::to_json() const {
  return {{"seed", seed},
          {"dataset_hash", dataset_hash},
          {"checkpoint_hash", checkpoint_hash},
          {"eval_hash", eval_hash}};
}

CellProvenance CellProvenance::from_json(const nlohmann::json& j) {
  CellProvenance p;
  p.seed = j.at("seed").get<uint64_t>();
  p.dataset_hash = j.at("dataset_hash").get<std::string>();
  p.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
  p.eval_hash = j.at("eval_hash").get<std::string>();
  return p;
}

nlohmann::json ResultRow::to_json() const {
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& p : provenance) prov.push_back(p.to_json());
  return {{"experiment", experiment},
          {"property", property},
          {"property_value", property_value},
          {"split", split},
          {"attribute", attribute},
          {"n_seeds", n_seeds},
          {"kept_seeds", kept_seeds},
          {"mean_binding", num_or_null(mean_binding)},
          {"binding_ci", binding_ci},
          {"mean_nofilter", mean_nofilter},
          {"nofilter_ci", nofilter_ci},
          {"mean_recognition", mean_recognition},
          {"mean_n_kept", mean_n_kept},
          {"batch_size", batch_size},
          {"embed_dim", embed_dim},
          {"provenance", std::move(prov)}};
}

ResultRow ResultRow::from_json(const nlohmann::json& j) {
  ResultRow r;
  try {
    r.experiment = j.at("experiment").get<std::string>();
    r.property = j.at("property").get<std::string>();
    r.property_value = j.at("property_value").get<double>();
    r.split = j.at("split").get<std::string>();
    r.attribute = j.at("attribute").get<std::string>();
    r.n_seeds = j.at("n_seeds").get<int>();
    r.kept_seeds = j.at("kept_seeds").get<int>();
    r.mean_binding = null_or_num(j.at("mean_binding"));
    r.binding_ci = j.at("binding_ci").get<double>();
    r.mean_nofilter = j.at("mean_nofilter").get<double>();
    r.nofilter_ci = j.at("nofilter_ci").get<double>();
    r.mean_recognition = j.at("mean_recognition").get<double>();
    r.mean_n_kept = j.at("mean_n_kept").get<double>();
    r.batch_size = j.at("batch_size").get<int>();
    r.embed_dim = j.at("embed_dim").get<int>();
    for (const auto& p : j.at("provenance")) r.provenance.push_back(CellProvenance::from_json(p));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptRecordError(std::string("result row: ") + e.what());
  }
  return r;
}

nlohmann::json ResultsTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) rows_json.push_back(r.to_json());
  return {{"name", name},
          {"rows", std::move(rows_json)},
          {"stats",
           {{"datasets_built", stats.datasets_built},
            {"models_trained", stats.models_trained},
            {"evals_computed", stats.evals_computed}}}};
}

ResultsTable ResultsTable::from_json(const nlohmann::json& j) {
  ResultsTable t;
  try {
    t.name = j.at("name").get<std::string>();
    for (const auto& r : j.at("rows")) t.rows.push_back(ResultRow::from_json(r));
    if (j.contains("stats")) {
      t.stats.datasets_built = j["stats"].value("datasets_built", 0);
      t.stats.models_trained = j["stats"].value("models_trained", 0);
      t.stats.evals_computed = j["stats"].value("evals_computed", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptRecordError(std::string("results table: ") + e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Cached artifacts
// ---------------------------------------------------------------------------

std::string ensure_dataset(const DataConfig& cfg, const std::string& mnist_dir,
                           const std::string& cache_dir, RunStats* stats) {
  cfg.validate();
  const fs::path dir = fs::path(cache_dir) / "datasets" / hex16(cfg.content_hash());
  if (fs::exists(dir / "manifest.json")) {
    try {
      read_manifest(dir.string());
      return dir.string();
    } catch (const Error& e) {
      std::cerr << "[cache] stale dataset " << dir << " (" << e.what() << "); regenerating\n";
      fs::remove_all(dir);
    }
  }
  const DigitStore store = DigitStore::load(mnist_dir, cfg.digit_split());
  const fs::path partial = dir.string() + ".partial";
  fs::remove_all(partial);
  fs::create_directories(partial);
  generate_dataset(cfg, store, partial.string());
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  fs::rename(partial, dir);
  if (stats) ++stats->datasets_built;
  return dir.string();
}

std::string ensure_eval_set(const EvalConfig& cfg, const std::string& mnist_dir,
                            const std::string& cache_dir, RunStats* stats) {
  cfg.validate();
  const fs::path dir = fs::path(cache_dir) / "evalsets" / hex16(cfg.content_hash());
  if (fs::exists(dir / "manifest.json")) {
    try {
      read_manifest(dir.string());
      return dir.string();
    } catch (const Error& e) {
      std::cerr << "[cache] stale eval set " << dir << " (" << e.what() << "); regenerating\n";
      fs::remove_all(dir);
    }
  }
  const DigitStore store =
      DigitStore::load(mnist_dir, digit_split_from_string(cfg.mnist_split));
  const fs::path partial = dir.string() + ".partial";
  fs::remove_all(partial);
  fs::create_directories(partial);
  generate_eval_set(cfg, store, partial.string());
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  fs::rename(partial, dir);
  if (stats) ++stats->datasets_built;
  return dir.string();
}

std::string ensure_checkpoint(const DataConfig& data, const ModelConfig& model,
                              const TrainConfig& train, const std::string& mnist_dir,
                              const std::string& cache_dir, RunStats* stats) {
  const std::string hash = hex16(run_hash(data, model, train));
  const fs::path path = fs::path(cache_dir) / "checkpoints" / (hash + ".ckpt");
  if (fs::exists(path)) return path.string();

  const std::string dataset_dir = ensure_dataset(data, mnist_dir, cache_dir, stats);
  const std::vector<PairRecord> records = read_shards(dataset_dir);
  std::unique_ptr<DigitStore> digits;
  if (train.negatives == "text+image") {
    digits = std::make_unique<DigitStore>(DigitStore::load(mnist_dir, data.digit_split()));
  }
  std::vector<TrainLogRow> log;
  std::unique_ptr<TinyClip<float>> trained =
      train_model(model, train, records, digits.get(), &log);

  nlohmann::json extra{{"data", data.to_json()},
                       {"train", train.to_json()},
                       {"dataset_hash", hex16(data.content_hash())},
                       {"run_hash", hash}};
  if (!log.empty()) extra["final_loss"] = log.back().loss;
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".partial";
  save_checkpoint(tmp.string(), *trained, extra);
  fs::rename(tmp, path);
  if (stats) ++stats->models_trained;
  return path.string();
}

namespace {

// One cached (checkpoint, eval set, target) evaluation. `model` is loaded
// lazily and shared across targets; `records` are the eval set rows.
nlohmann::json ensure_eval(const std::string& ckpt_path, const std::string& checkpoint_hash,
                           const EvalConfig& ec, const std::vector<PairRecord>& records,
                           std::unique_ptr<TinyClip<float>>& model,
                           std::unique_ptr<ClipScorer>& scorer, const std::string& cache_dir,
                           RunStats* stats) {
  const std::string ehash = hex16(eval_hash_of(checkpoint_hash, ec));
  const fs::path path = fs::path(cache_dir) / "evals" / (ehash + ".json");
  if (fs::exists(path)) {
    std::ifstream in(path);
    nlohmann::json cached;
    in >> cached;
    return cached;
  }

  if (!model) {
    model = load_checkpoint(ckpt_path);
    scorer = std::make_unique<ClipScorer>(*model);
  }
  const RecognitionResult recog = recognition_accuracy(*scorer, records, ec.target);
  double binding = kNan;
  double nofilter = kNan;
  bool kept = false;
  int n_kept = 0;
  bool all_filtered = false;
  try {
    const BindingResult b = binding_accuracy(*scorer, records, ec.target, recog);
    binding = b.binding_accuracy;
    nofilter = b.binding_accuracy_nofilter;
    kept = b.kept;
    n_kept = b.n_kept;
  } catch (const AllSamplesFilteredError&) {
    // Kept by the attribute-level rule yet zero records survived; recover the
    // unfiltered number by treating every record as recognized.
    all_filtered = true;
    kept = true;
    RecognitionResult all_ok = recog;
    for (auto& f : all_ok.slot_correct) f = {true, true};
    all_ok.accuracy = 1.0;
    nofilter = binding_accuracy(*scorer, records, ec.target, all_ok).binding_accuracy;
  }

  nlohmann::json result{{"target", ec.target},
                        {"split", ec.split},
                        {"recognition", recog.accuracy},
                        {"n_candidates", recog.n_candidates},
                        {"p_chance", recog.p_chance},
                        {"kept", kept},
                        {"all_filtered", all_filtered},
                        {"n_total", static_cast<int>(records.size())},
                        {"n_kept", n_kept},
                        {"binding", num_or_null(binding)},
                        {"nofilter", num_or_null(nofilter)},
                        {"checkpoint_hash", checkpoint_hash},
                        {"evalset_hash", hex16(ec.content_hash())},
                        {"eval_hash", ehash}};
  write_text_atomic(path, result.dump(2) + "\n");
  if (stats) ++stats->evals_computed;
  return result;
}

struct RunJob {
  DataConfig data;
  TrainConfig train;  // seed already applied
};

}  // namespace

ResultsTable run_experiment(const ExperimentSpec& spec, const std::string& mnist_dir,
                            const std::string& cache_dir, int jobs) {
  spec.validate();
  if (jobs < 1) throw ConfigError("jobs must be at least 1");

  // Expand the sweep into per-cell data configs and check isolation.
  std::vector<std::pair<double, DataConfig>> cells;
  if (spec.sweep_property.empty()) {
    cells.emplace_back(0.0, spec.data);
  } else {
    std::vector<DataConfig> configs;
    for (double v : spec.sweep_values) {
      configs.push_back(with_property(spec.data, spec.sweep_property, v));
      cells.emplace_back(v, configs.back());
    }
    check_sweep_isolation(configs, spec.sweep_property);
  }

  std::vector<std::string> splits = {"test"};
  if (spec.eval_ood) splits.push_back("ood-test");

  ResultsTable table;
  table.name = spec.name;

  // Phase 1 (serial): all datasets and eval sets exist afterwards.
  for (const auto& [value, data] : cells) {
    ensure_dataset(data, mnist_dir, cache_dir, &table.stats);
  }
  std::map<std::pair<std::string, std::string>, std::string> eval_dirs;  // (target, split) -> dir
  for (const auto& target : spec.eval_targets) {
    for (const auto& split : splits) {
      EvalConfig ec;
      ec.target = target;
      ec.n_records = spec.eval_records;
      ec.split = split;
      ec.mnist_split = "test";
      ec.seed = spec.eval_seed;
      eval_dirs[{target, split}] = ensure_eval_set(ec, mnist_dir, cache_dir, &table.stats);
    }
  }

  // Phase 2: train missing checkpoints, optionally in parallel (the jobs are
  // independent runs; datasets are already on disk and read-only).
  std::vector<RunJob> run_jobs;
  for (const auto& [value, data] : cells) {
    for (uint64_t seed : spec.seeds) {
      TrainConfig train = spec.train;
      train.seed = seed;
      run_jobs.push_back({data, train});
    }
  }
  {
    std::mutex stats_mutex;
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= run_jobs.size()) return;
        try {
          RunStats local;
          ensure_checkpoint(run_jobs[i].data, spec.model, run_jobs[i].train, mnist_dir, cache_dir,
                            &local);
          std::lock_guard<std::mutex> lock(stats_mutex);
          table.stats.datasets_built += local.datasets_built;
          table.stats.models_trained += local.models_trained;
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    if (jobs == 1 || run_jobs.size() <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      const int n_threads = std::min<int>(jobs, static_cast<int>(run_jobs.size()));
      pool.reserve(n_threads);
      for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
  }

  // Phase 3 (serial): evaluate and aggregate, persisting after every cell.
  for (const auto& [value, data] : cells) {
    // Lazily loaded models for this cell, one per seed.
    std::vector<std::unique_ptr<TinyClip<float>>> models(spec.seeds.size());
    std::vector<std::unique_ptr<ClipScorer>> scorers(spec.seeds.size());
    std::vector<std::string> ckpt_paths(spec.seeds.size());
    std::vector<std::string> ckpt_hashes(spec.seeds.size());
    for (size_t s = 0; s < spec.seeds.size(); ++s) {
      TrainConfig train = spec.train;
      train.seed = spec.seeds[s];
      ckpt_hashes[s] = hex16(run_hash(data, spec.model, train));
      ckpt_paths[s] =
          (fs::path(cache_dir) / "checkpoints" / (ckpt_hashes[s] + ".ckpt")).string();
    }

    for (const auto& split : splits) {
      for (const auto& target : spec.eval_targets) {
        EvalConfig ec;
        ec.target = target;
        ec.n_records = spec.eval_records;
        ec.split = split;
        ec.mnist_split = "test";
        ec.seed = spec.eval_seed;
        std::vector<PairRecord> records;  // loaded only if some seed misses cache

        ResultRow row;
        row.experiment = spec.name;
        row.property = spec.sweep_property;
        row.property_value = value;
        row.split = split;
        row.attribute = target;
        row.n_seeds = static_cast<int>(spec.seeds.size());
        row.batch_size = spec.train.batch_size;
        row.embed_dim = spec.model.embed_dim;

        std::vector<double> kept_bindings, nofilters, recognitions, n_kepts;
        for (size_t s = 0; s < spec.seeds.size(); ++s) {
          const std::string ehash_probe =
              hex16(eval_hash_of(ckpt_hashes[s], ec));
          const fs::path eval_path = fs::path(cache_dir) / "evals" / (ehash_probe + ".json");
          if (!fs::exists(eval_path) && records.empty()) {
            records = read_shards(eval_dirs.at({target, split}));
          }
          nlohmann::json e;
          try {
            e = ensure_eval(ckpt_paths[s], ckpt_hashes[s], ec, records, models[s], scorers[s],
                            cache_dir, &table.stats);
          } catch (const Error& err) {
            std::cerr << "[experiment " << spec.name << " value " << value << " seed "
                      << spec.seeds[s] << " target " << target << "] " << err.what() << "\n";
            throw;
          }
          const bool kept = e.at("kept").get<bool>();
          const int n_kept = e.at("n_kept").get<int>();
          if (kept && n_kept > 0) kept_bindings.push_back(e.at("binding").get<double>());
          if (!e.at("nofilter").is_null()) nofilters.push_back(e.at("nofilter").get<double>());
          recognitions.push_back(e.at("recognition").get<double>());
          n_kepts.push_back(n_kept);
          row.provenance.push_back({spec.seeds[s], hex16(data.content_hash()), ckpt_hashes[s],
                                    e.at("eval_hash").get<std::string>()});
        }
        row.kept_seeds = static_cast<int>(kept_bindings.size());
        row.mean_binding = kept_bindings.empty() ? kNan : mean_of(kept_bindings);
        row.binding_ci = ci_of(kept_bindings);
        row.mean_nofilter = mean_of(nofilters);
        row.nofilter_ci = ci_of(nofilters);
        row.mean_recognition = mean_of(recognitions);
        row.mean_n_kept = mean_of(n_kepts);
        table.rows.push_back(std::move(row));
      }
    }
    if (!spec.out_dir.empty()) {
      write_text_atomic(fs::path(spec.out_dir) / "results" / (spec.name + ".json"),
                        table.to_json().dump(2) + "\n");
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Statistics helpers
// ---------------------------------------------------------------------------

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ShapeMismatchError("spearman_rho needs two equal-length series of >= 2 points");
  }
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

namespace {

std::string fmt_fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

std::string fmt_value(double v) {
  std::ostringstream out;
  out << v;  // default precision: "0.25", "1", "3.5"
  return out.str();
}

std::string joined(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

constexpr std::string_view kWideOrder[] = {"color",    "scaling",  "fracture",
                                           "rotation", "swelling", "thickness"};

std::string row_label(const ResultRow& r) {
  std::string label = r.experiment;
  if (!r.property.empty()) label += " " + r.property + "=" + fmt_value(r.property_value);
  if (r.split != "test") label += " (" + r.split + ")";
  return label;
}

}  // namespace

std::string results_csv(const ResultsTable& t) {
  std::ostringstream out;
  out << "experiment,property,property_value,split,attribute,n_seeds,kept_seeds,mean_binding,"
         "binding_ci,mean_nofilter,nofilter_ci,mean_recognition,mean_n_kept,batch,embed,seeds,"
         "dataset_hashes,checkpoint_hashes\n";
  for (const auto& r : t.rows) {
    std::vector<std::string> seeds, datasets, ckpts;
    for (const auto& p : r.provenance) {
      seeds.push_back(std::to_string(p.seed));
      datasets.push_back(p.dataset_hash);
      ckpts.push_back(p.checkpoint_hash);
    }
    out << r.experiment << ',' << r.property << ',' << fmt_value(r.property_value) << ','
        << r.split << ',' << r.attribute << ',' << r.n_seeds << ',' << r.kept_seeds << ','
        << (r.kept_seeds == 0 ? std::string("filtered") : fmt_fixed(r.mean_binding, 6)) << ','
        << fmt_fixed(r.binding_ci, 6) << ',' << fmt_fixed(r.mean_nofilter, 6) << ','
        << fmt_fixed(r.nofilter_ci, 6) << ',' << fmt_fixed(r.mean_recognition, 6) << ','
        << fmt_fixed(r.mean_n_kept, 1) << ',' << r.batch_size << ',' << r.embed_dim << ','
        << joined(seeds, ';') << ',' << joined(datasets, ';') << ',' << joined(ckpts, ';')
        << '\n';
  }
  return out.str();
}

std::string results_wide_csv(const ResultsTable& t) {
  // Group rows into wide lines keyed by (label, batch, embed), first
  // appearance order.
  struct WideRow {
    std::string label;
    int batch = 0;
    int embed = 0;
    std::map<std::string, std::string> cells;
  };
  std::vector<WideRow> wide;
  auto find_row = [&](const ResultRow& r) -> WideRow& {
    const std::string label = row_label(r);
    for (auto& w : wide) {
      if (w.label == label && w.batch == r.batch_size && w.embed == r.embed_dim) return w;
    }
    wide.push_back({label, r.batch_size, r.embed_dim, {}});
    return wide.back();
  };
  for (const auto& r : t.rows) {
    WideRow& w = find_row(r);
    w.cells[r.attribute] =
        r.kept_seeds == 0 ? std::string("filtered") : fmt_fixed(100.0 * r.mean_binding, 2);
  }

  std::ostringstream out;
  out << "data,batch,embed";
  for (std::string_view a : kWideOrder) out << ',' << a;
  out << '\n';
  for (const auto& w : wide) {
    out << w.label << ',' << w.batch << ',' << w.embed;
    for (std::string_view a : kWideOrder) {
      const auto it = w.cells.find(std::string(a));
      out << ',' << (it == w.cells.end() ? std::string() : it->second);
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Plot rendering
// ---------------------------------------------------------------------------

namespace {

// 5x7 bitmap glyphs, low five bits per row. Covers what axis labels and
// legends need: digits, lowercase letters and a little punctuation.
struct Glyph {
  char ch;
  uint8_t rows[7];
};

constexpr Glyph kGlyphs[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
    {'b', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E}},
    {'c', {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
    {'d', {0x01, 0x01, 0x0D, 0x13, 0x11, 0x11, 0x0F}},
    {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
    {'f', {0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08}},
    {'g', {0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
    {'h', {0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
    {'j', {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0C}},
    {'k', {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12}},
    {'l', {0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'m', {0x00, 0x00, 0x1A, 0x15, 0x15, 0x11, 0x11}},
    {'n', {0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11}},
    {'o', {0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E}},
    {'p', {0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10}},
    {'q', {0x00, 0x00, 0x0D, 0x13, 0x0F, 0x01, 0x01}},
    {'r', {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10}},
    {'s', {0x00, 0x00, 0x0E, 0x10, 0x0E, 0x01, 0x1E}},
    {'t', {0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06}},
    {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D}},
    {'v', {0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'w', {0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0A}},
    {'x', {0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11}},
    {'y', {0x00, 0x00, 0x11, 0x11, 0x0F, 0x01, 0x0E}},
    {'z', {0x00, 0x00, 0x1F, 0x02, 0x04, 0x08, 0x1F}},
};

const uint8_t* glyph_rows(char c) {
  for (const auto& g : kGlyphs) {
    if (g.ch == c) return g.rows;
  }
  return kGlyphs[14].rows;  // space for anything unknown
}

struct Rgb {
  float r, g, b;
};

constexpr Rgb kSeriesColors[] = {
    {0.85f, 0.10f, 0.10f}, {0.10f, 0.60f, 0.15f}, {0.15f, 0.25f, 0.85f}, {0.75f, 0.10f, 0.75f},
    {0.00f, 0.60f, 0.60f}, {0.90f, 0.55f, 0.05f}, {0.40f, 0.40f, 0.40f}, {0.55f, 0.30f, 0.10f}};

void put_px(Image& img, int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.at(x, y, 0) = c.r;
  img.at(x, y, 1) = c.g;
  img.at(x, y, 2) = c.b;
}

void blend_px(Image& img, int x, int y, const Rgb& c, float alpha) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.at(x, y, 0) = (1 - alpha) * img.at(x, y, 0) + alpha * c.r;
  img.at(x, y, 1) = (1 - alpha) * img.at(x, y, 1) + alpha * c.g;
  img.at(x, y, 2) = (1 - alpha) * img.at(x, y, 2) + alpha * c.b;
}

void fill_rect(Image& img, int x0, int y0, int x1, int y1, const Rgb& c) {
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) put_px(img, x, y, c);
  }
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, const Rgb& c, int thickness = 1) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  int x = x0, y = y0;
  for (;;) {
    for (int ox = 0; ox < thickness; ++ox) {
      for (int oy = 0; oy < thickness; ++oy) put_px(img, x + ox, y + oy, c);
    }
    if (x == x1 && y == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}

void draw_text(Image& img, int x, int y, const std::string& text, const Rgb& c, int scale = 1) {
  int cx = x;
  for (char ch : text) {
    const uint8_t* rows = glyph_rows(ch);
    for (int ry = 0; ry < 7; ++ry) {
      for (int rx = 0; rx < 5; ++rx) {
        if (rows[ry] & (1 << (4 - rx))) {
          fill_rect(img, cx + rx * scale, y + ry * scale, cx + rx * scale + scale - 1,
                    y + ry * scale + scale - 1, c);
        }
      }
    }
    cx += 6 * scale;
  }
}

int text_width(const std::string& text, int scale) {
  return static_cast<int>(text.size()) * 6 * scale;
}

}  // namespace

Image render_sweep_plot(const ResultsTable& t) {
  constexpr int kW = 640, kH = 480;
  constexpr int kLeft = 70, kRight = 160, kTop = 24, kBottom = 56;
  const int plot_w = kW - kLeft - kRight;
  const int plot_h = kH - kTop - kBottom;
  const Rgb white{1, 1, 1}, black{0, 0, 0}, grid{0.88f, 0.88f, 0.88f}, gray{0.55f, 0.55f, 0.55f};

  Image img(kW, kH, 3);
  fill_rect(img, 0, 0, kW - 1, kH - 1, white);

  // Collect the series: one per attribute, values sorted by x, test split only.
  std::vector<std::string> attrs;
  std::string property;
  for (const auto& r : t.rows) {
    if (r.split != "test") continue;
    if (!r.property.empty()) property = r.property;
    if (std::find(attrs.begin(), attrs.end(), r.attribute) == attrs.end()) {
      attrs.push_back(r.attribute);
    }
  }
  double xmin = 0.0, xmax = 1.0;
  bool have_x = false;
  for (const auto& r : t.rows) {
    if (r.split != "test") continue;
    if (!have_x) {
      xmin = xmax = r.property_value;
      have_x = true;
    }
    xmin = std::min(xmin, r.property_value);
    xmax = std::max(xmax, r.property_value);
  }
  if (!have_x || xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }

  const auto x_of = [&](double v) {
    return kLeft + static_cast<int>(std::lround((v - xmin) / (xmax - xmin) * plot_w));
  };
  const auto y_of = [&](double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return kTop + plot_h - static_cast<int>(std::lround(clamped * plot_h));
  };

  // Grid and axes: y ticks every 0.25, x ticks at the data values.
  for (int i = 0; i <= 4; ++i) {
    const double v = 0.25 * i;
    const int y = y_of(v);
    draw_line(img, kLeft, y, kLeft + plot_w, y, grid);
    const std::string label = fmt_fixed(v, 2);
    draw_text(img, kLeft - 10 - text_width(label, 1), y - 3, label, black);
  }
  std::vector<double> xticks;
  for (const auto& r : t.rows) {
    if (r.split != "test") continue;
    if (std::find(xticks.begin(), xticks.end(), r.property_value) == xticks.end()) {
      xticks.push_back(r.property_value);
    }
  }
  std::sort(xticks.begin(), xticks.end());
  for (double v : xticks) {
    const int x = x_of(v);
    draw_line(img, x, kTop + plot_h, x, kTop + plot_h + 4, black);
    const std::string label = fmt_value(v);
    draw_text(img, x - text_width(label, 1) / 2, kTop + plot_h + 8, label, black);
  }
  // Chance level at 0.5.
  for (int x = kLeft; x < kLeft + plot_w; x += 8) {
    draw_line(img, x, y_of(0.5), std::min(x + 3, kLeft + plot_w), y_of(0.5), gray);
  }
  draw_line(img, kLeft, kTop, kLeft, kTop + plot_h, black);
  draw_line(img, kLeft, kTop + plot_h, kLeft + plot_w, kTop + plot_h, black);
  if (!property.empty()) {
    draw_text(img, kLeft + (plot_w - text_width(property, 2)) / 2, kH - 22, property, black, 2);
  }

  // Series with confidence bands.
  for (size_t a = 0; a < attrs.size(); ++a) {
    const Rgb color = kSeriesColors[a % std::size(kSeriesColors)];
    std::vector<std::pair<double, const ResultRow*>> pts;
    for (const auto& r : t.rows) {
      if (r.split != "test" || r.attribute != attrs[a]) continue;
      if (r.kept_seeds == 0 || std::isnan(r.mean_binding)) continue;  // filtered: gap
      pts.emplace_back(r.property_value, &r);
    }
    std::sort(pts.begin(), pts.end(),
              [](const auto& p, const auto& q) { return p.first < q.first; });
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      const int x0 = x_of(pts[i].first), x1 = x_of(pts[i + 1].first);
      // Confidence band, linearly interpolated column by column.
      for (int x = x0; x <= x1; ++x) {
        const double f = x1 == x0 ? 0.0 : static_cast<double>(x - x0) / (x1 - x0);
        const double m = pts[i].second->mean_binding +
                         f * (pts[i + 1].second->mean_binding - pts[i].second->mean_binding);
        const double ci =
            pts[i].second->binding_ci + f * (pts[i + 1].second->binding_ci - pts[i].second->binding_ci);
        for (int y = y_of(m + ci); y <= y_of(m - ci); ++y) blend_px(img, x, y, color, 0.18f);
      }
      draw_line(img, x0, y_of(pts[i].second->mean_binding), x1,
                y_of(pts[i + 1].second->mean_binding), color, 2);
    }
    for (const auto& [xv, row] : pts) {
      fill_rect(img, x_of(xv) - 2, y_of(row->mean_binding) - 2, x_of(xv) + 2,
                y_of(row->mean_binding) + 2, color);
    }
    // Legend entry.
    const int ly = kTop + 8 + static_cast<int>(a) * 16;
    fill_rect(img, kW - kRight + 12, ly, kW - kRight + 26, ly + 6, color);
    draw_text(img, kW - kRight + 32, ly, attrs[a], black);
  }
  return img;
}

void emit_report(const std::vector<ResultsTable>& tables, const std::string& out_dir) {
  for (const auto& t : tables) {
    // Hand-built tables may be unnamed; fall back to the rows' experiment.
    const std::string name =
        !t.name.empty() ? t.name : (t.rows.empty() ? "results" : t.rows.front().experiment);
    const fs::path results = fs::path(out_dir) / "results";
    write_text_atomic(results / (name + ".csv"), results_csv(t));
    write_text_atomic(results / (name + "-wide.csv"), results_wide_csv(t));
    write_text_atomic(results / (name + ".json"), t.to_json().dump(2) + "\n");
    const bool swept =
        std::any_of(t.rows.begin(), t.rows.end(), [](const auto& r) { return !r.property.empty(); });
    if (swept) {
      const fs::path plots = fs::path(out_dir) / "plots";
      fs::create_directories(plots);
      const Image plot = render_sweep_plot(t);
      const fs::path tmp = plots / (name + ".png.partial");
      write_png_file(tmp.string(), plot);
      fs::rename(tmp, plots / (name + ".png"));
    }
  }
}

ModelConfig scaled_model(int embed_dim) {
  ModelConfig m;
  if (embed_dim == m.embed_dim) return m;
  if (embed_dim % 32 != 0) {
    throw ConfigError("scaled_model: embed_dim must be a multiple of 32, got " +
                      std::to_string(embed_dim));
  }
  const int factor = embed_dim / 32;
  m.embed_dim = embed_dim;
  m.vision_width = 48 * factor;
  m.vision_heads = m.vision_width / 12;  // keep 12-dim vision heads
  m.text_width = 32 * factor;
  m.text_heads = m.text_width / 8;  // keep 8-dim text heads
  m.validate();
  return m;
}

}  // namespace madgrid
