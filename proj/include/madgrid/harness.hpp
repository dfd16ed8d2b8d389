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
#include "madgrid/dataset.hpp"
#include "madgrid/evaluator.hpp"
#include "madgrid/tinyclip.hpp"

namespace madgrid {

// Part of every run and eval cache key; bump when orchestration semantics
// change in a way that invalidates cached artifacts.
inline constexpr const char* kHarnessVersion = "madgrid-harness-1";

// MADGRID_CACHE_DIR, else ~/.cache/madgrid, else ./.madgrid-cache.
std::string default_cache_dir();

// One experiment: a base data setup, at most one swept property, a model and
// training recipe, and the seeds/targets to evaluate.
struct ExperimentSpec {
  std::string name;
  DataConfig data;              // fixed knob values; also n_samples and seed base
  std::string sweep_property;   // "" = single cell; else one of the four knobs
  std::vector<double> sweep_values;
  ModelConfig model;
  TrainConfig train;            // its seed field is overridden per run
  std::vector<uint64_t> seeds = {0, 1, 2};
  std::vector<std::string> eval_targets = {"color",    "scaling",  "fracture",
                                           "rotation", "swelling", "thickness"};
  int eval_records = 2000;
  uint64_t eval_seed = 0;
  bool eval_ood = false;  // additionally evaluate on the ood-test split
  std::string out_dir;    // partial + final tables land here; "" disables

  nlohmann::json to_json() const;
  static ExperimentSpec from_json(const nlohmann::json& j);
  void validate() const;  // ConfigError
};

// Returns base with the named knob (p_two_obj_img, p_two_obj_cap, attr_mean,
// p_saliency) set to value; ConfigError on anything else.
DataConfig with_property(DataConfig base, const std::string& property, double value);

// ConfigError unless the configs are identical except in the swept property.
void check_sweep_isolation(const std::vector<DataConfig>& cells, const std::string& property);

// Where a reported number came from: one entry per seed.
struct CellProvenance {
  uint64_t seed = 0;
  std::string dataset_hash;     // hex16 manifest hash of the training set
  std::string checkpoint_hash;  // hex16 run hash
  std::string eval_hash;        // hex16 of the cached evaluation

  nlohmann::json to_json() const;
  static CellProvenance from_json(const nlohmann::json& j);
};

struct ResultRow {
  std::string experiment;
  std::string property;  // "" when nothing is swept
  double property_value = 0.0;
  std::string split;  // test | ood-test
  std::string attribute;
  int n_seeds = 0;
  int kept_seeds = 0;  // seeds where the attribute passed the filter
  // Mean binding over kept seeds (NaN when none kept) with a 95% t-interval
  // half-width when at least two seeds are kept.
  double mean_binding = 0.0;
  double binding_ci = 0.0;
  double mean_nofilter = 0.0;  // over all seeds
  double nofilter_ci = 0.0;
  double mean_recognition = 0.0;
  double mean_n_kept = 0.0;
  int batch_size = 0;  // setup columns for the paper-layout table
  int embed_dim = 0;
  std::vector<CellProvenance> provenance;

  nlohmann::json to_json() const;
  static ResultRow from_json(const nlohmann::json& j);
};

struct RunStats {
  int datasets_built = 0;  // training sets + eval sets generated (not cached)
  int models_trained = 0;
  int evals_computed = 0;
};

struct ResultsTable {
  std::string name;
  std::vector<ResultRow> rows;
  RunStats stats;  // of the run_experiment call that produced the table

  nlohmann::json to_json() const;
  static ResultsTable from_json(const nlohmann::json& j);
};

// Content-addressed artifact steps; each returns the artifact path and bumps
// *stats only when work actually happened.
std::string ensure_dataset(const DataConfig& cfg, const std::string& mnist_dir,
                           const std::string& cache_dir, RunStats* stats = nullptr);
std::string ensure_eval_set(const EvalConfig& cfg, const std::string& mnist_dir,
                            const std::string& cache_dir, RunStats* stats = nullptr);
std::string ensure_checkpoint(const DataConfig& data, const ModelConfig& model,
                              const TrainConfig& train, const std::string& mnist_dir,
                              const std::string& cache_dir, RunStats* stats = nullptr);

// Runs the whole experiment: datasets -> checkpoints -> evaluations ->
// aggregation, all cached; re-running a completed spec trains nothing and
// returns the identical table. Partial tables are persisted to spec.out_dir
// after every cell. jobs > 1 trains independent checkpoints concurrently.
ResultsTable run_experiment(const ExperimentSpec& spec, const std::string& mnist_dir,
                            const std::string& cache_dir, int jobs = 1);

// Spearman rank correlation with average ranks on ties; needs >= 2 points.
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

// Long-form CSV: one row per (cell, split, attribute), filtered cells spelled
// out, provenance hashes included. Deterministic bytes.
std::string results_csv(const ResultsTable& t);
// Published-table layout: data,batch,embed then the six attribute columns as
// percentages (two decimals); excluded attributes render as "filtered".
std::string results_wide_csv(const ResultsTable& t);
// Line chart of binding vs property value, one series per attribute with a
// shaded confidence band; 640x480 RGB.
Image render_sweep_plot(const ResultsTable& t);

// Writes <out>/results/<name>.{csv,json}, <name>-wide.csv and, for swept
// tables, <out>/plots/<name>.png. Byte-deterministic for identical tables.
void emit_report(const std::vector<ResultsTable>& tables, const std::string& out_dir);

// The published scale ablation varies the embedding size with the tower
// widths in proportion; embed 32 is the default model.
ModelConfig scaled_model(int embed_dim);

}  // namespace madgrid
