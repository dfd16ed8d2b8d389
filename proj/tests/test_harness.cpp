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

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "madgrid/png_io.hpp"

using namespace madgrid;
namespace fs = std::filesystem;

namespace {

constexpr const char* kMnistDir = MADGRID_SOURCE_DIR "/data/mnist";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// A model small enough that a harness run is a matter of seconds but still
// shaped like the real one (96x96 input).
ModelConfig tiny_model() {
  ModelConfig m;
  m.embed_dim = 16;
  m.image_resolution = 96;
  m.vision_layers = 2;
  m.vision_width = 16;
  m.vision_heads = 2;
  m.vision_patch_size = 16;
  m.text_width = 16;
  m.text_layers = 2;
  m.text_heads = 2;
  return m;
}

ExperimentSpec tiny_spec(const std::string& name) {
  ExperimentSpec spec;
  spec.name = name;
  spec.data = DataConfig::base();
  spec.data.n_samples = 48;
  spec.model = tiny_model();
  spec.train.epochs = 2;
  spec.train.warmup_steps = 2;
  spec.seeds = {0};
  spec.eval_targets = {"color", "scaling"};
  spec.eval_records = 16;
  return spec;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MADGRID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("experiment spec round trip and validation") {
  ExperimentSpec spec = tiny_spec("roundtrip");
  spec.sweep_property = "p_saliency";
  spec.sweep_values = {0.0, 0.5, 1.0};
  spec.eval_ood = true;
  const ExperimentSpec back = ExperimentSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
  CHECK(back.sweep_property == "p_saliency");
  CHECK(back.seeds == spec.seeds);

  ExperimentSpec bad = spec;
  bad.sweep_property = "p_two_obj";  // not a knob
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.sweep_values.clear();  // property named but no values
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.eval_targets = {"colour"};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sweep cells differ only in the swept property") {
  const DataConfig base = DataConfig::base();
  DataConfig a = with_property(base, "p_two_obj_img", 0.25);
  CHECK(a.p_two_obj_img == doctest::Approx(0.25));
  CHECK(a.p_two_obj_cap == base.p_two_obj_cap);
  CHECK(a.attr_mean == base.attr_mean);
  DataConfig b = with_property(base, "attr_mean", 3.5);
  CHECK(b.attr_mean == doctest::Approx(3.5));
  CHECK_THROWS_AS(with_property(base, "saliency_bias", 0.5), ConfigError);

  // The isolation check rejects a pair of configs that differ elsewhere.
  DataConfig rogue = with_property(base, "p_two_obj_img", 0.5);
  rogue.seed = 77;
  CHECK_THROWS_AS(check_sweep_isolation({a, rogue}, "p_two_obj_img"), ConfigError);
  CHECK_NOTHROW(check_sweep_isolation({a, with_property(base, "p_two_obj_img", 0.5)},
                                      "p_two_obj_img"));
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman_rho({1, 2, 3, 4, 5}, {10, 20, 30, 40, 50}) == doctest::Approx(1.0));
  CHECK(spearman_rho({1, 2, 3, 4, 5}, {50, 40, 30, 20, 10}) == doctest::Approx(-1.0));
  // One adjacent transposition in five points.
  CHECK(spearman_rho({1, 2, 3, 4, 5}, {1, 3, 2, 4, 5}) == doctest::Approx(0.9));
  // Ties get average ranks.
  CHECK(spearman_rho({1, 2, 3, 4}, {1, 1, 2, 2}) == doctest::Approx(1.0 / std::sqrt(1.25)));
  CHECK_THROWS_AS(spearman_rho({1, 2}, {1}), ShapeMismatchError);
  CHECK_THROWS_AS(spearman_rho({1}, {1}), ShapeMismatchError);
}

TEST_CASE("default cache dir honors the environment") {
  setenv("MADGRID_CACHE_DIR", "/tmp/madgrid-cache-env-test", 1);
  CHECK(default_cache_dir() == "/tmp/madgrid-cache-env-test");
  unsetenv("MADGRID_CACHE_DIR");
  CHECK(default_cache_dir() != "/tmp/madgrid-cache-env-test");
  CHECK_FALSE(default_cache_dir().empty());
}

TEST_CASE("run_experiment trains once, caches everything, and is reproducible") {
  TempDir cache("madgrid_harness_cache");
  TempDir out("madgrid_harness_out");
  ExperimentSpec spec = tiny_spec("cache-check");
  spec.out_dir = out.path.string();

  const ResultsTable first = run_experiment(spec, kMnistDir, cache.path.string());
  CHECK(first.stats.models_trained == 1);
  CHECK(first.stats.datasets_built >= 1);
  CHECK(first.stats.evals_computed == 2);
  REQUIRE(first.rows.size() == 2);  // two targets, one cell, test split only
  for (const auto& row : first.rows) {
    CHECK(row.experiment == "cache-check");
    CHECK(row.n_seeds == 1);
    CHECK(row.split == "test");
    REQUIRE(row.provenance.size() == 1);
    CHECK(row.provenance[0].dataset_hash.size() == 16);
    CHECK(row.provenance[0].checkpoint_hash.size() == 16);
    // Traceability: the named checkpoint actually exists in the cache.
    CHECK(fs::exists(cache.path / "checkpoints" / (row.provenance[0].checkpoint_hash + ".ckpt")));
    CHECK(row.mean_recognition >= 0.0);
    CHECK(row.mean_recognition <= 1.0);
  }
  // Partial results were persisted to the output directory.
  CHECK(fs::exists(out.path / "results" / "cache-check.json"));

  const ResultsTable second = run_experiment(spec, kMnistDir, cache.path.string());
  CHECK(second.stats.models_trained == 0);
  CHECK(second.stats.datasets_built == 0);
  CHECK(second.stats.evals_computed == 0);
  CHECK(second.to_json()["rows"] == first.to_json()["rows"]);
}

TEST_CASE("results tables serialize and aggregate multiple seeds") {
  TempDir cache("madgrid_harness_cache2");
  ExperimentSpec spec = tiny_spec("two-seeds");
  spec.seeds = {0, 1};
  spec.eval_targets = {"color"};
  const ResultsTable t = run_experiment(spec, kMnistDir, cache.path.string());
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].n_seeds == 2);
  CHECK(t.rows[0].provenance.size() == 2);
  CHECK(t.rows[0].provenance[0].checkpoint_hash != t.rows[0].provenance[1].checkpoint_hash);
  // Both seeds share one dataset: generation ran once.
  CHECK(t.rows[0].provenance[0].dataset_hash == t.rows[0].provenance[1].dataset_hash);
  CHECK(t.stats.models_trained == 2);
  CHECK(t.stats.datasets_built >= 1);

  const ResultsTable back = ResultsTable::from_json(t.to_json());
  CHECK(back.to_json() == t.to_json());
}

TEST_CASE("report emission is deterministic and marks filtered cells") {
  // Hand-built table: no training needed to pin the report format.
  ResultsTable t;
  ResultRow row;
  row.experiment = "demo";
  row.property = "p_saliency";
  row.property_value = 0.5;
  row.split = "test";
  row.attribute = "color";
  row.n_seeds = 3;
  row.kept_seeds = 3;
  row.mean_binding = 0.912;
  row.binding_ci = 0.021;
  row.mean_nofilter = 0.88;
  row.mean_recognition = 0.97;
  row.mean_n_kept = 1800;
  row.batch_size = 16;
  row.embed_dim = 32;
  row.provenance = {{0, "0123456789abcdef", "fedcba9876543210", "00ff00ff00ff00ff"}};
  t.rows.push_back(row);
  row.attribute = "swelling";
  row.kept_seeds = 0;  // excluded by the recognition filter in every seed
  row.mean_binding = std::numeric_limits<double>::quiet_NaN();
  t.rows.push_back(row);

  const std::string csv = results_csv(t);
  CHECK(csv.find("demo") != std::string::npos);
  CHECK(csv.find("filtered") != std::string::npos);
  CHECK(csv == results_csv(t));

  const std::string wide = results_wide_csv(t);
  CHECK(wide.rfind("data,batch,embed,color,scaling,fracture,rotation,swelling,thickness", 0) == 0);
  CHECK(wide.find("filtered") != std::string::npos);
  CHECK(wide.find("91.20") != std::string::npos);  // percentages, two decimals

  TempDir out("madgrid_report_out");
  emit_report({t}, out.path.string());
  emit_report({t}, out.path.string());
  CHECK(fs::exists(out.path / "results" / "demo.csv"));
  CHECK(fs::exists(out.path / "results" / "demo-wide.csv"));
  CHECK(fs::exists(out.path / "results" / "demo.json"));
  CHECK(fs::exists(out.path / "plots" / "demo.png"));
  const std::string png1 = read_file(out.path / "plots" / "demo.png");
  emit_report({t}, out.path.string());
  CHECK(read_file(out.path / "plots" / "demo.png") == png1);
}

TEST_CASE("sweep plots render line charts with confidence bands") {
  ResultsTable t;
  for (double v : {0.0, 0.5, 1.0}) {
    for (const char* attr : {"color", "thickness"}) {
      ResultRow row;
      row.experiment = "plotdemo";
      row.property = "p_two_obj_cap";
      row.property_value = v;
      row.split = "test";
      row.attribute = attr;
      row.n_seeds = 3;
      row.kept_seeds = 3;
      row.mean_binding = 0.5 + 0.4 * v;
      row.binding_ci = 0.05;
      t.rows.push_back(row);
    }
  }
  const Image plot = render_sweep_plot(t);
  CHECK(plot.width == 640);
  CHECK(plot.height == 480);
  CHECK(plot.channels == 3);
  // Deterministic and actually drawn on.
  const Image again = render_sweep_plot(t);
  CHECK(to_u8(plot) == to_u8(again));
  int colored = 0;
  const auto bytes = to_u8(plot);
  for (size_t i = 0; i + 2 < bytes.size(); i += 3) {
    if (bytes[i] != bytes[i + 1] || bytes[i + 1] != bytes[i + 2]) ++colored;
  }
  CHECK(colored > 500);  // line strokes and bands are chromatic
}

TEST_CASE("cli wires gen, train and eval together") {
  TempDir work("madgrid_cli_work");
  const std::string data_dir = (work.path / "data").string();
  const std::string ckpt = (work.path / "model.ckpt").string();
  const std::string eval_dir = (work.path / "eval").string();

  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") != 0);
  CHECK(run_cli("gen") != 0);  // missing required output

  CHECK(run_cli("gen --preset base --n-samples 32 --seed 5 --mnist " +
                std::string(kMnistDir) + " --out " + data_dir) == 0);
  CHECK(fs::exists(fs::path(data_dir) / "manifest.json"));

  CHECK(run_cli("train --data " + data_dir + " --mnist " + kMnistDir +
                " --embed 16 --vision-width 16 --vision-heads 2 --vision-layers 2 "
                "--patch 16 --text-width 16 --text-heads 2 --text-layers 2 "
                "--epochs 1 --warmup 2 --seed 0 --out " + ckpt) == 0);
  CHECK(fs::exists(ckpt));

  CHECK(run_cli("eval --ckpt " + ckpt + " --mnist " + kMnistDir +
                " --targets color --records 8 --eval-seed 1 --out " + eval_dir) == 0);
  CHECK(fs::exists(fs::path(eval_dir) / "eval.csv"));
  CHECK(fs::exists(fs::path(eval_dir) / "eval.json"));

  // Config validation errors name the offending field and exit nonzero.
  CHECK(run_cli("gen --preset base --n-samples -3 --mnist " + std::string(kMnistDir) +
                " --out " + data_dir) != 0);
}

TEST_CASE("cli sweep produces a table and a plot") {
  TempDir work("madgrid_cli_sweep");
  const std::string cache = (work.path / "cache").string();
  const std::string out = (work.path / "out").string();
  const int rc = run_cli(
      "sweep --property p_two_obj_cap --values 0,1 --seeds 0 --preset base "
      "--n-samples 32 --epochs 1 --warmup 2 --records 8 "
      "--embed 16 --vision-width 16 --vision-heads 2 --vision-layers 2 --patch 16 "
      "--text-width 16 --text-heads 2 --text-layers 2 "
      "--targets color --mnist " + std::string(kMnistDir) +
      " --cache-dir " + cache + " --out " + out);
  CHECK(rc == 0);
  CHECK(fs::exists(fs::path(out) / "results" / "sweep-p_two_obj_cap.csv"));
  CHECK(fs::exists(fs::path(out) / "results" / "sweep-p_two_obj_cap-wide.csv"));
  CHECK(fs::exists(fs::path(out) / "plots" / "sweep-p_two_obj_cap.png"));
}

TEST_SUITE_END();
