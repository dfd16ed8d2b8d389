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

#include "madgrid/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string_view>

namespace madgrid {
namespace {

struct TargetInfo {
  std::string name;
  std::optional<AttrCategory> category;  // nullopt = object identity
  int n_candidates = 0;
};

TargetInfo resolve(const std::string& target) {
  if (target == "object") return {target, std::nullopt, kObjectCandidateCount};
  const AttrCategory c = AttributeCatalog::instance().category_by_name(target);
  return {target, c, AttributeCatalog::instance().value_count(c)};
}

int target_value(const DescribedObject& o, const TargetInfo& info) {
  return info.category ? o.attributes.value_of(*info.category) : o.digit_class;
}

void set_target_value(DescribedObject& o, const TargetInfo& info, int v) {
  if (info.category) {
    o.attributes.set(*info.category, v);
  } else {
    o.digit_class = v;
  }
}

std::vector<int> ids_for(const std::vector<DescribedObject>& objs) {
  return tokenize(render_caption(objs));
}

void validate_record(const PairRecord& rec, const std::vector<DescribedObject>& objs,
                     const TargetInfo& info) {
  if (objs.size() != 2) {
    throw ConfigError("evaluation needs two captioned objects, record " +
                      std::to_string(rec.id) + " has " + std::to_string(objs.size()));
  }
  if (info.category) {
    for (const auto& o : objs) {
      if (!o.described[static_cast<int>(*info.category)]) {
        throw ConfigError("target '" + info.name + "' not described on both objects of record " +
                          std::to_string(rec.id));
      }
    }
  }
  if (target_value(objs[0], info) == target_value(objs[1], info)) {
    throw ConfigError("objects of record " + std::to_string(rec.id) +
                      " share their '" + info.name + "' value; the swap would be degenerate");
  }
}

std::vector<double> checked_scores(Scorer& scorer, const PairRecord& rec,
                                   const std::vector<std::vector<int>>& candidates) {
  std::vector<double> s = scorer.score(rec, candidates);
  if (s.size() != candidates.size()) {
    throw ShapeMismatchError("scorer returned " + std::to_string(s.size()) + " scores for " +
                             std::to_string(candidates.size()) + " captions");
  }
  return s;
}

// Two-sided 95% critical values of Student's t for df = 1..30; the normal
// value 1.96 serves beyond that.
constexpr double kT975[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                            2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                            2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                            2.060,  2.056, 2.052, 2.048, 2.045, 2.042};

constexpr std::string_view kPaperOrder[] = {"color",    "scaling",  "fracture",
                                            "rotation", "swelling", "thickness"};

std::vector<const TargetEvaluation*> paper_sorted(const std::vector<TargetEvaluation>& evals) {
  std::vector<const TargetEvaluation*> out;
  out.reserve(evals.size());
  for (std::string_view name : kPaperOrder) {
    for (const auto& e : evals) {
      if (e.binding.target == name) out.push_back(&e);
    }
  }
  for (const auto& e : evals) {
    const bool named = std::any_of(std::begin(kPaperOrder), std::end(kPaperOrder),
                                   [&](std::string_view n) { return e.binding.target == n; });
    if (!named) out.push_back(&e);
  }
  return out;
}

}  // namespace

std::vector<double> ClipScorer::score(const PairRecord& rec,
                                      const std::vector<std::vector<int>>& caption_ids) {
  const uint64_t key = fnv1a64(std::string_view(
      reinterpret_cast<const char*>(rec.image_rgb.data()), rec.image_rgb.size()));
  auto it = image_cache_.find(key);
  if (it == image_cache_.end()) {
    const std::vector<const PairRecord*> one{&rec};
    const nn::Mat<float> embed =
        model_->encode_images(images_to_matrix<float>(one, model_->config().image_resolution));
    it = image_cache_.emplace(key, embed.row(0)).first;
  }
  const Eigen::RowVectorXd image = it->second.cast<double>();
  const nn::Mat<float> texts = model_->encode_texts(caption_ids);
  std::vector<double> out(caption_ids.size());
  for (size_t i = 0; i < caption_ids.size(); ++i) {
    out[i] = image.dot(texts.row(static_cast<Eigen::Index>(i)).cast<double>());
  }
  return out;
}

std::optional<AttrCategory> resolve_eval_target(const std::string& target) {
  return resolve(target).category;
}

int target_candidate_count(const std::string& target) { return resolve(target).n_candidates; }

std::vector<DescribedObject> swapped_objects(std::vector<DescribedObject> objects,
                                             const std::string& target) {
  const TargetInfo info = resolve(target);
  if (objects.size() != 2) {
    throw ConfigError("swap needs exactly two described objects, got " +
                      std::to_string(objects.size()));
  }
  const int v0 = target_value(objects[0], info);
  const int v1 = target_value(objects[1], info);
  set_target_value(objects[0], info, v1);
  set_target_value(objects[1], info, v0);
  return objects;
}

RecognitionResult recognition_accuracy(Scorer& scorer, const std::vector<PairRecord>& records,
                                       const std::string& target) {
  const TargetInfo info = resolve(target);
  if (records.empty()) throw EmptyEvalSetError("recognition of '" + target + "' over zero records");

  RecognitionResult res;
  res.target = target;
  res.n_candidates = info.n_candidates;
  res.p_chance = 1.0 / info.n_candidates;
  res.n_records = static_cast<int>(records.size());
  res.slot_correct.reserve(records.size());

  int correct = 0;
  for (const auto& rec : records) {
    const auto objs = rec.described_objects();
    validate_record(rec, objs, info);

    // Candidate 0 is the truth; then each slot's false captions, obtained by
    // substituting every other target value at that slot.
    std::vector<std::vector<int>> candidates;
    candidates.reserve(1 + 2 * (info.n_candidates - 1));
    candidates.push_back(ids_for(objs));
    std::array<std::pair<int, int>, 2> spans{};
    for (int slot = 0; slot < 2; ++slot) {
      const int begin = static_cast<int>(candidates.size());
      const int truth = target_value(objs[slot], info);
      for (int v = 0; v < info.n_candidates; ++v) {
        if (v == truth) continue;
        auto changed = objs;
        set_target_value(changed[slot], info, v);
        candidates.push_back(ids_for(changed));
      }
      spans[slot] = {begin, static_cast<int>(candidates.size())};
    }

    const std::vector<double> s = checked_scores(scorer, rec, candidates);
    std::array<bool, 2> flags{};
    for (int slot = 0; slot < 2; ++slot) {
      bool ok = true;
      for (int i = spans[slot].first; i < spans[slot].second; ++i) ok = ok && s[0] > s[i];
      flags[slot] = ok;
      correct += ok ? 1 : 0;
    }
    res.slot_correct.push_back(flags);
  }
  res.accuracy = static_cast<double>(correct) / (2.0 * res.n_records);
  return res;
}

BindingResult binding_accuracy(Scorer& scorer, const std::vector<PairRecord>& records,
                               const std::string& target, const RecognitionResult& recog) {
  const TargetInfo info = resolve(target);
  if (records.empty()) throw EmptyEvalSetError("binding of '" + target + "' over zero records");
  if (recog.target != target || recog.n_records != static_cast<int>(records.size()) ||
      recog.slot_correct.size() != records.size()) {
    throw ConfigError("recognition result does not match the eval records for '" + target + "'");
  }

  BindingResult res;
  res.target = target;
  res.n_total = static_cast<int>(records.size());
  res.kept = recog.accuracy > kRecognitionFilterFactor * recog.p_chance;

  int kept_count = 0;
  int kept_hits = 0;
  int all_hits = 0;
  for (size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    const auto objs = rec.described_objects();
    validate_record(rec, objs, info);
    const std::vector<std::vector<int>> candidates = {ids_for(objs),
                                                      ids_for(swapped_objects(objs, target))};
    const std::vector<double> s = checked_scores(scorer, rec, candidates);
    const bool win = s[0] > s[1];
    all_hits += win ? 1 : 0;
    if (recog.slot_correct[r][0] && recog.slot_correct[r][1]) {
      ++kept_count;
      kept_hits += win ? 1 : 0;
    }
  }
  res.binding_accuracy_nofilter = static_cast<double>(all_hits) / res.n_total;
  res.n_kept = kept_count;
  if (!res.kept) {
    res.binding_accuracy = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  if (kept_count == 0) {
    throw AllSamplesFilteredError("every record of '" + target +
                                  "' failed recognition despite the attribute being kept");
  }
  res.binding_accuracy = static_cast<double>(kept_hits) / kept_count;
  return res;
}

TargetEvaluation evaluate_target(Scorer& scorer, const std::vector<PairRecord>& records,
                                 const std::string& target) {
  TargetEvaluation eval;
  eval.recognition = recognition_accuracy(scorer, records, target);
  eval.binding = binding_accuracy(scorer, records, target, eval.recognition);
  return eval;
}

SeedAggregate aggregate_seeds(const std::vector<double>& per_seed_values) {
  const int n = static_cast<int>(per_seed_values.size());
  if (n < 2) {
    throw InsufficientSeedsError("confidence interval needs at least two seeds, got " +
                                 std::to_string(n));
  }
  const double mean =
      std::accumulate(per_seed_values.begin(), per_seed_values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : per_seed_values) ss += (v - mean) * (v - mean);
  const double stddev = std::sqrt(ss / (n - 1));
  const int df = n - 1;
  const double t = df <= 30 ? kT975[df - 1] : 1.96;
  return {n, mean, t * stddev / std::sqrt(static_cast<double>(n))};
}

nlohmann::json RecognitionResult::to_json() const {
  return {{"target", target},
          {"n_candidates", n_candidates},
          {"p_chance", p_chance},
          {"accuracy", accuracy},
          {"n_records", n_records}};
}

nlohmann::json BindingResult::to_json() const {
  nlohmann::json j{{"attribute", target},
                   {"kept", kept},
                   {"n_total", n_total},
                   {"n_kept", n_kept},
                   {"binding_accuracy_nofilter", binding_accuracy_nofilter}};
  if (kept) {
    j["binding_accuracy"] = binding_accuracy;
  } else {
    j["binding_accuracy"] = nullptr;
  }
  return j;
}

nlohmann::json evaluation_json(const std::vector<TargetEvaluation>& evals) {
  nlohmann::json targets = nlohmann::json::array();
  for (const TargetEvaluation* e : paper_sorted(evals)) {
    nlohmann::json j = e->binding.to_json();
    j["recognition"] = e->recognition.to_json();
    targets.push_back(std::move(j));
  }
  return {{"targets", std::move(targets)}};
}

std::string evaluation_csv(const std::vector<TargetEvaluation>& evals) {
  std::ostringstream out;
  out << "attribute,recognition_accuracy,n_candidates,p_chance,kept,n_total,n_kept,"
         "binding_accuracy,binding_accuracy_nofilter\n";
  out << std::fixed << std::setprecision(6);
  for (const TargetEvaluation* e : paper_sorted(evals)) {
    const BindingResult& b = e->binding;
    out << b.target << ',' << e->recognition.accuracy << ',' << e->recognition.n_candidates << ','
        << e->recognition.p_chance << ',' << (b.kept ? "true" : "false") << ',' << b.n_total << ','
        << b.n_kept << ',';
    if (b.kept) {
      out << b.binding_accuracy;
    } else {
      out << "filtered";
    }
    out << ',' << b.binding_accuracy_nofilter << '\n';
  }
  return out.str();
}

}  // namespace madgrid
