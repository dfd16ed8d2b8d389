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
//
// madgrid command line: dataset generation, training, evaluation, sweeps and
// canned result reproductions. Config can come from a JSON file (--config,
// keys "data" / "model" / "train" / "experiment"); flags override the file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "madgrid/dataset.hpp"
#include "madgrid/evaluator.hpp"
#include "madgrid/harness.hpp"
#include "madgrid/tinyclip.hpp"

namespace fs = std::filesystem;
using namespace madgrid;

namespace {

DataConfig preset_by_name(const std::string& name) {
  if (name == "realistic") return DataConfig::realistic();
  if (name == "ideal") return DataConfig::ideal();
  if (name == "base") return DataConfig::base();
  throw ConfigError("unknown preset '" + name + "' (realistic | ideal | base)");
}

// The --config file is applied before flag parsing so that flags win. The
// subcommand is not known yet at that point, hence the manual scan.
nlohmann::json load_config_arg(int argc, char** argv) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) path = argv[i + 1];
    if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  }
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in.good()) throw IoError("cannot read config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path + ": expected a JSON object");
  return j;
}

// Data-property flags shared by `gen` and `sweep`. Applied post-parse in a
// fixed order (preset first, then individual knobs) so both can be combined.
struct DataFlags {
  std::string preset;
  double p_two_obj_img = 0.0;
  double p_two_obj_cap = 0.0;
  double attr_mean = 0.0;
  double p_saliency = 0.0;
  int n_samples = 0;
  std::string split;
  std::string mnist_split;
  uint64_t seed = 0;

  void attach(CLI::App* cmd, const std::string& seed_flag) {
    cmd->add_option("--preset", preset, "data preset: realistic | ideal | base");
    cmd->add_option("--p-two-obj-img", p_two_obj_img, "P(two objects in image)");
    cmd->add_option("--p-two-obj-cap", p_two_obj_cap,
                    "P(both objects captioned | two objects)");
    cmd->add_option("--attr-mean", attr_mean, "expected described attributes per object");
    cmd->add_option("--p-saliency", p_saliency, "P(caption only the salient object)");
    cmd->add_option("--n-samples", n_samples, "number of image-caption pairs")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--split", split, "dataset split: train | test | ood-test");
    cmd->add_option("--mnist-split", mnist_split, "digit source split: train | test");
    cmd->add_option(seed_flag, seed, "dataset generation seed");
  }

  void apply(const CLI::App& cmd, const std::string& seed_flag, DataConfig& cfg) const {
    if (cmd.count("--preset")) {
      const DataConfig p = preset_by_name(preset);
      cfg.p_two_obj_img = p.p_two_obj_img;
      cfg.p_two_obj_cap = p.p_two_obj_cap;
      cfg.attr_mean = p.attr_mean;
      cfg.p_saliency = p.p_saliency;
    }
    if (cmd.count("--p-two-obj-img")) cfg.p_two_obj_img = p_two_obj_img;
    if (cmd.count("--p-two-obj-cap")) cfg.p_two_obj_cap = p_two_obj_cap;
    if (cmd.count("--attr-mean")) cfg.attr_mean = attr_mean;
    if (cmd.count("--p-saliency")) cfg.p_saliency = p_saliency;
    if (cmd.count("--n-samples")) cfg.n_samples = n_samples;
    if (cmd.count("--split")) cfg.split = split;
    if (cmd.count("--mnist-split")) cfg.mnist_split = mnist_split;
    if (cmd.count(seed_flag)) cfg.seed = seed;
  }
};

void attach_model_flags(CLI::App* cmd, ModelConfig& m) {
  cmd->add_option("--embed", m.embed_dim, "joint embedding dimension");
  cmd->add_option("--resolution", m.image_resolution, "input image resolution");
  cmd->add_option("--vision-width", m.vision_width, "vision transformer width");
  cmd->add_option("--vision-heads", m.vision_heads, "vision attention heads");
  cmd->add_option("--vision-layers", m.vision_layers, "vision transformer depth");
  cmd->add_option("--patch", m.vision_patch_size, "vision patch size");
  cmd->add_option("--text-width", m.text_width, "text transformer width");
  cmd->add_option("--text-heads", m.text_heads, "text attention heads");
  cmd->add_option("--text-layers", m.text_layers, "text transformer depth");
}

void attach_train_flags(CLI::App* cmd, TrainConfig& t, bool with_seed) {
  cmd->add_option("--batch", t.batch_size, "contrastive batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", t.epochs, "training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", t.lr, "peak learning rate");
  cmd->add_option("--weight-decay", t.weight_decay, "AdamW weight decay");
  cmd->add_option("--warmup", t.warmup_steps, "linear warmup steps");
  cmd->add_option("--negatives", t.negatives, "hard negatives: none | text | text+image")
      ->check(CLI::IsMember({"none", "text", "text+image"}));
  cmd->add_option("--log-every", t.log_every, "steps between log rows");
  if (with_seed) cmd->add_option("--seed", t.seed, "training seed");
}

std::string fmt_pct(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  DataConfig cfg = DataConfig::base();
  DataFlags flags;
  std::string config_path, mnist, out;
};

int run_gen(const CLI::App& cmd, GenArgs& a) {
  a.flags.apply(cmd, "--seed", a.cfg);
  a.cfg.validate();
  const DigitStore store = DigitStore::load(a.mnist, a.cfg.digit_split());
  generate_dataset(a.cfg, store, a.out);
  const nlohmann::json manifest = read_manifest(a.out);
  std::cout << "gen: wrote " << manifest.at("n_records").get<size_t>() << " records to " << a.out
            << " (config_hash " << manifest.at("config_hash").get<std::string>() << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  ModelConfig model;
  TrainConfig train;
  std::string config_path, data, mnist, out, log_path;
};

int run_train(TrainArgs& a) {
  a.model.validate();
  a.train.validate();
  const nlohmann::json manifest = read_manifest(a.data);
  const std::vector<PairRecord> records = read_shards(a.data);
  std::unique_ptr<DigitStore> digits;
  if (a.train.negatives == "text+image") {
    const DataConfig data_cfg = DataConfig::from_json(manifest.at("config"));
    digits = std::make_unique<DigitStore>(DigitStore::load(a.mnist, data_cfg.digit_split()));
  }
  std::vector<TrainLogRow> log;
  std::unique_ptr<TinyClip<float>> model =
      train_model(a.model, a.train, records, digits.get(), &log);

  nlohmann::json extra{{"data", manifest.at("config")},
                       {"dataset_hash", manifest.at("config_hash")},
                       {"train", a.train.to_json()}};
  if (!log.empty()) extra["final_loss"] = log.back().loss;
  if (const fs::path parent = fs::path(a.out).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  save_checkpoint(a.out, *model, extra);
  if (!a.log_path.empty()) {
    std::ofstream out(a.log_path);
    out << "step,loss,lr,logit_scale\n";
    for (const auto& row : log) {
      out << row.step << ',' << row.loss << ',' << row.lr << ',' << row.logit_scale << '\n';
    }
  }
  std::cout << "train: " << records.size() << " records, " << a.train.epochs << " epochs";
  if (!log.empty()) std::cout << ", final loss " << log.back().loss;
  std::cout << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, mnist, out;
  std::vector<std::string> targets = {"color", "scaling", "fracture",
                                      "rotation", "swelling", "thickness"};
  int records = 2000;
  std::string split = "test";
  uint64_t eval_seed = 0;
};

int run_eval(EvalArgs& a) {
  nlohmann::json extra;
  std::unique_ptr<TinyClip<float>> model = load_checkpoint(a.ckpt, &extra);
  ClipScorer scorer(*model);
  const DigitStore store = DigitStore::load(a.mnist, DigitSplit::kTest);

  std::vector<TargetEvaluation> evals;
  for (const auto& target : a.targets) {
    EvalConfig ec;
    ec.target = target;
    ec.n_records = a.records;
    ec.split = a.split;
    ec.mnist_split = "test";
    ec.seed = a.eval_seed;
    ec.validate();
    const std::vector<PairRecord> set = build_eval_set(ec, OodSpec::standard(), store);
    evals.push_back(evaluate_target(scorer, set, target));
    const auto& e = evals.back();
    std::cout << "eval: " << target << " recognition " << fmt_pct(e.recognition.accuracy)
              << "% binding "
              << (e.binding.kept ? fmt_pct(e.binding.binding_accuracy) + "%"
                                 : std::string("filtered"))
              << " (n_kept " << e.binding.n_kept << "/" << e.binding.n_total << ")\n";
  }
  fs::create_directories(a.out);
  {
    std::ofstream out(fs::path(a.out) / "eval.csv");
    out << evaluation_csv(evals);
  }
  {
    std::ofstream out(fs::path(a.out) / "eval.json");
    out << evaluation_json(evals).dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
  ExperimentSpec spec;
  DataFlags flags;
  std::string config_path, name, property, mnist, cache_dir, out;
  std::vector<double> values;
  std::vector<uint64_t> seeds;
  std::vector<std::string> targets;
  int records = 0;
  uint64_t eval_seed = 0;
  bool ood = false;
  int jobs = 1;
};

int run_sweep(const CLI::App& cmd, SweepArgs& a) {
  ExperimentSpec& spec = a.spec;
  a.flags.apply(cmd, "--data-seed", spec.data);
  if (cmd.count("--property")) spec.sweep_property = a.property;
  if (cmd.count("--values")) spec.sweep_values = a.values;
  if (cmd.count("--seeds")) spec.seeds = a.seeds;
  if (cmd.count("--targets")) spec.eval_targets = a.targets;
  if (cmd.count("--records")) spec.eval_records = a.records;
  if (cmd.count("--eval-seed")) spec.eval_seed = a.eval_seed;
  if (cmd.count("--ood")) spec.eval_ood = a.ood;
  if (cmd.count("--name")) {
    spec.name = a.name;
  } else if (spec.name.empty()) {
    spec.name = "sweep-" + spec.sweep_property;
  }
  spec.out_dir = a.out;
  spec.validate();
  if (spec.sweep_property.empty()) {
    throw ConfigError("sweep requires --property (or an experiment config with one)");
  }

  const ResultsTable table = run_experiment(spec, a.mnist, a.cache_dir, a.jobs);
  emit_report({table}, a.out);
  std::cout << results_wide_csv(table);
  std::cout << "sweep: " << table.rows.size() << " rows -> " << a.out << " (datasets built "
            << table.stats.datasets_built << ", models trained " << table.stats.models_trained
            << ", evals computed " << table.stats.evals_computed << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int run_report(const std::string& out) {
  const fs::path results = fs::path(out) / "results";
  if (!fs::exists(results)) throw IoError("no results directory under " + out);
  std::vector<ResultsTable> tables;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(results)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CorruptRecordError(file.string() + ": " + e.what());
    }
    tables.push_back(ResultsTable::from_json(j));
  }
  if (tables.empty()) throw IoError("no results/*.json files under " + out);
  emit_report(tables, out);
  std::cout << "report: regenerated " << tables.size() << " table(s) under " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// repro
// ---------------------------------------------------------------------------

struct ReproArgs {
  std::string what, scale = "small", mnist = "data/mnist", cache_dir, out;
  std::vector<uint64_t> seeds = {0, 1, 2};
  int n_samples = 50000;
  int epochs = 30;
  int records = 2000;
  int jobs = 1;
};

ExperimentSpec repro_base_spec(const ReproArgs& a, const std::string& name,
                               const DataConfig& preset) {
  ExperimentSpec spec;
  spec.name = name;
  spec.data = preset;
  spec.data.n_samples = a.n_samples;
  spec.train.epochs = a.epochs;
  spec.seeds = a.seeds;
  spec.eval_records = a.records;
  spec.out_dir = a.out;
  return spec;
}

ResultsTable combine(const std::string& name, const std::vector<ResultsTable>& parts) {
  ResultsTable all;
  all.name = name;
  for (const auto& t : parts) {
    all.rows.insert(all.rows.end(), t.rows.begin(), t.rows.end());
    all.stats.datasets_built += t.stats.datasets_built;
    all.stats.models_trained += t.stats.models_trained;
    all.stats.evals_computed += t.stats.evals_computed;
  }
  return all;
}

int run_repro(ReproArgs& a) {
  if (a.out.empty()) a.out = "runs/" + a.what;
  std::vector<ExperimentSpec> specs;
  bool combined = false;

  if (a.what == "table1") {
    combined = true;
    std::vector<std::pair<int, int>> scales = {{16, 32}};
    if (a.scale == "full") scales = {{16, 32}, {16, 256}, {256, 32}, {256, 256}};
    for (const auto& [batch, embed] : scales) {
      for (const std::string preset : {"realistic", "ideal"}) {
        std::string name = preset;
        if (scales.size() > 1) {
          name += "-b" + std::to_string(batch) + "-e" + std::to_string(embed);
        }
        ExperimentSpec spec = repro_base_spec(a, name, preset_by_name(preset));
        spec.model = scaled_model(embed);
        spec.train.batch_size = batch;
        specs.push_back(std::move(spec));
      }
    }
  } else if (a.what == "table2") {
    combined = true;
    specs.push_back(repro_base_spec(a, "clip-realistic", DataConfig::realistic()));
    specs.push_back(repro_base_spec(a, "negclip-text-realistic", DataConfig::realistic()));
    specs.back().train.negatives = "text";
    specs.push_back(repro_base_spec(a, "clip-ideal", DataConfig::ideal()));
  } else if (a.what == "fig3") {
    specs.push_back(repro_base_spec(a, "fig3a", DataConfig::base()));
    specs.back().sweep_property = "p_two_obj_img";
    specs.back().sweep_values = {0.0, 0.25, 0.5, 0.75, 1.0};
    specs.push_back(repro_base_spec(a, "fig3b", DataConfig::base()));
    specs.back().sweep_property = "p_two_obj_cap";
    specs.back().sweep_values = {0.0, 0.25, 0.5, 0.75, 1.0};
  } else if (a.what == "fig4") {
    specs.push_back(repro_base_spec(a, "fig4a", DataConfig::base()));
    specs.back().sweep_property = "attr_mean";
    specs.back().sweep_values = {0.57, 1.0, 1.8, 2.6, 3.5, 4.5, 5.5, 6.0};
    specs.push_back(repro_base_spec(a, "fig4b", DataConfig::ideal()));
    specs.back().sweep_property = "p_saliency";
    specs.back().sweep_values = {0.0, 0.25, 0.5, 0.75, 0.9, 1.0};
  } else if (a.what == "fig6") {
    specs.push_back(repro_base_spec(a, "fig6", DataConfig::ideal()));
    specs.back().eval_ood = true;
  } else {  // appendix-tables
    combined = true;
    specs.push_back(repro_base_spec(a, "ideal", DataConfig::ideal()));
    const DataConfig real = DataConfig::realistic();
    auto except = [&](const std::string& prop, double v) {
      ExperimentSpec spec =
          repro_base_spec(a, "ideal-except-" + prop, with_property(DataConfig::ideal(), prop, v));
      specs.push_back(std::move(spec));
    };
    except("p_two_obj_img", real.p_two_obj_img);
    except("p_two_obj_cap", real.p_two_obj_cap);
    except("attr_mean", real.attr_mean);
    except("p_saliency", real.p_saliency);
  }

  std::vector<ResultsTable> tables;
  for (const auto& spec : specs) {
    std::cout << "repro " << a.what << ": running " << spec.name << " ("
              << (spec.sweep_property.empty()
                      ? std::string("single cell")
                      : spec.sweep_property + " x" + std::to_string(spec.sweep_values.size()))
              << ", " << spec.seeds.size() << " seed(s))\n"
              << std::flush;
    tables.push_back(run_experiment(spec, a.mnist, a.cache_dir, a.jobs));
  }
  if (combined) {
    emit_report({combine(a.what, tables)}, a.out);
    std::cout << results_wide_csv(combine(a.what, tables));
  } else {
    emit_report(tables, a.out);
    for (const auto& t : tables) std::cout << results_wide_csv(t);
  }
  std::cout << "repro: results under " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"madgrid: two-digit scene generation, tiny contrastive models and "
               "object-attribute binding measurements"};
  app.require_subcommand(1);

  GenArgs gen;
  TrainArgs train;
  EvalArgs eval;
  SweepArgs sweep;
  std::string report_out;
  ReproArgs repro;

  try {
    const nlohmann::json file = load_config_arg(argc, argv);
    if (file.contains("data")) gen.cfg = DataConfig::from_json(file["data"]);
    if (file.contains("model")) train.model = ModelConfig::from_json(file["model"]);
    if (file.contains("train")) train.train = TrainConfig::from_json(file["train"]);
    if (file.contains("experiment")) sweep.spec = ExperimentSpec::from_json(file["experiment"]);
    if (file.contains("model")) sweep.spec.model = ModelConfig::from_json(file["model"]);
    if (file.contains("train")) sweep.spec.train = TrainConfig::from_json(file["train"]);
    if (file.contains("data") && !file.contains("experiment")) {
      sweep.spec.data = DataConfig::from_json(file["data"]);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a dataset into --out");
  gen_cmd->add_option("--config", gen.config_path, "JSON config file (key: data)");
  gen.flags.attach(gen_cmd, "--seed");
  gen_cmd->add_option("--mnist", gen.mnist, "MNIST directory")->required();
  gen_cmd->add_option("--out", gen.out, "output dataset directory")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a generated dataset");
  train_cmd->add_option("--config", train.config_path, "JSON config file (keys: model, train)");
  train_cmd->add_option("--data", train.data, "dataset directory from `gen`")->required();
  train_cmd->add_option("--mnist", train.mnist, "MNIST directory")->required();
  attach_model_flags(train_cmd, train.model);
  attach_train_flags(train_cmd, train.train, /*with_seed=*/true);
  train_cmd->add_option("--out", train.out, "checkpoint output path")->required();
  train_cmd->add_option("--log", train.log_path, "optional training log CSV path");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on fresh eval sets");
  eval_cmd->add_option("--ckpt", eval.ckpt, "checkpoint path from `train`")->required();
  eval_cmd->add_option("--mnist", eval.mnist, "MNIST directory")->required();
  eval_cmd->add_option("--targets", eval.targets, "eval targets (comma separated)")
      ->delimiter(',');
  eval_cmd->add_option("--records", eval.records, "eval records per target")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--split", eval.split, "eval split: test | ood-test");
  eval_cmd->add_option("--eval-seed", eval.eval_seed, "eval set seed");
  eval_cmd->add_option("--out", eval.out, "output directory for eval.csv / eval.json")
      ->required();

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "sweep one data property end to end and emit a report");
  sweep_cmd->add_option("--config", sweep.config_path,
                        "JSON config file (keys: experiment, model, train, data)");
  sweep_cmd->add_option("--name", sweep.name, "experiment name (default sweep-<property>)");
  sweep_cmd->add_option("--property", sweep.property,
                        "swept property: p_two_obj_img | p_two_obj_cap | attr_mean | p_saliency");
  sweep_cmd->add_option("--values", sweep.values, "swept values (comma separated)")
      ->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep.seeds, "training seeds (comma separated)")
      ->delimiter(',');
  sweep.flags.attach(sweep_cmd, "--data-seed");
  attach_model_flags(sweep_cmd, sweep.spec.model);
  attach_train_flags(sweep_cmd, sweep.spec.train, /*with_seed=*/false);
  sweep_cmd->add_option("--targets", sweep.targets, "eval targets (comma separated)")
      ->delimiter(',');
  sweep_cmd->add_option("--records", sweep.records, "eval records per target")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--eval-seed", sweep.eval_seed, "eval set seed");
  sweep_cmd->add_flag("--ood", sweep.ood, "also evaluate out-of-distribution splits");
  sweep_cmd->add_option("--mnist", sweep.mnist, "MNIST directory")->required();
  sweep_cmd->add_option("--cache-dir", sweep.cache_dir, "artifact cache directory")
      ->default_val(default_cache_dir());
  sweep_cmd->add_option("--jobs", sweep.jobs, "concurrent training runs")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep.out, "output directory")->required();

  CLI::App* report_cmd =
      app.add_subcommand("report", "regenerate CSV tables and plots from results/*.json");
  report_cmd->add_option("--out", report_out, "directory containing results/")->required();

  CLI::App* repro_cmd = app.add_subcommand(
      "repro", "run a canned experiment campaign (cache-aware, resumable)");
  repro_cmd
      ->add_option("what", repro.what,
                   "table1 | table2 | fig3 | fig4 | fig6 | appendix-tables")
      ->required()
      ->check(CLI::IsMember({"table1", "table2", "fig3", "fig4", "fig6", "appendix-tables"}));
  repro_cmd->add_option("--scale", repro.scale, "table1 scale grid: small | full")
      ->check(CLI::IsMember({"small", "full"}));
  repro_cmd->add_option("--seeds", repro.seeds, "training seeds (comma separated)")
      ->delimiter(',');
  repro_cmd->add_option("--n-samples", repro.n_samples, "training pairs per dataset")
      ->check(CLI::PositiveNumber);
  repro_cmd->add_option("--epochs", repro.epochs, "training epochs")
      ->check(CLI::PositiveNumber);
  repro_cmd->add_option("--records", repro.records, "eval records per target")
      ->check(CLI::PositiveNumber);
  repro_cmd->add_option("--mnist", repro.mnist, "MNIST directory");
  repro_cmd->add_option("--cache-dir", repro.cache_dir, "artifact cache directory")
      ->default_val(default_cache_dir());
  repro_cmd->add_option("--jobs", repro.jobs, "concurrent training runs")
      ->check(CLI::PositiveNumber);
  repro_cmd->add_option("--out", repro.out, "output directory (default runs/<what>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen_cmd->parsed()) return run_gen(*gen_cmd, gen);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (sweep_cmd->parsed()) return run_sweep(*sweep_cmd, sweep);
    if (report_cmd->parsed()) return run_report(report_out);
    if (repro_cmd->parsed()) return run_repro(repro);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
