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
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "madgrid/dataset.hpp"
#include "madgrid/tinyclip.hpp"

namespace madgrid {

// Evaluation targets are the six attribute categories plus "object" (the
// digit class). Candidate counts follow the catalog; objects have ten.
constexpr int kObjectCandidateCount = 10;

// An attribute whose recognition accuracy does not clear chance times this
// factor is excluded from binding evaluation entirely.
constexpr double kRecognitionFilterFactor = 1.1;

// Assigns a match score to every candidate caption for one record's image;
// higher means a better image-text fit. Only comparisons between scores of
// the same call matter, so any positive rescaling is equivalent.
// Implementations must be deterministic.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<double> score(const PairRecord& rec,
                                    const std::vector<std::vector<int>>& caption_ids) = 0;
};

// Cosine similarity under a dual encoder. Image embeddings are cached by
// pixel-content hash, so interleaved recognition and binding passes over the
// same records pay for each image once. Scoring only touches the model's
// forward scratch buffers, never its parameters.
class ClipScorer final : public Scorer {
 public:
  explicit ClipScorer(TinyClip<float>& model) : model_(&model) {}

  std::vector<double> score(const PairRecord& rec,
                            const std::vector<std::vector<int>>& caption_ids) override;

 private:
  TinyClip<float>* model_;
  std::unordered_map<uint64_t, Eigen::RowVectorXf> image_cache_;
};

// Zero-shot recognition of one target over an eval set: per record and per
// caption slot, the ground-truth caption must strictly outscore every caption
// obtained by substituting another value of the target at that slot.
struct RecognitionResult {
  std::string target;
  int n_candidates = 0;
  double p_chance = 0.0;  // 1 / n_candidates
  double accuracy = 0.0;  // mean over records x slots
  int n_records = 0;
  std::vector<std::array<bool, 2>> slot_correct;  // per record, per caption slot

  nlohmann::json to_json() const;
};

// Two-alternative forced choice between the true caption and the caption with
// the target values exchanged between the noun phrases; chance level is 0.5.
struct BindingResult {
  std::string target;
  bool kept = false;  // recognition cleared kRecognitionFilterFactor x chance
  int n_total = 0;
  int n_kept = 0;  // records with both slots recognized
  // Fraction of kept records where the truth strictly outscores the swap;
  // NaN when the attribute is not kept.
  double binding_accuracy = 0.0;
  // Same comparison over all records, ignoring the recognition filter.
  double binding_accuracy_nofilter = 0.0;

  nlohmann::json to_json() const;
};

struct TargetEvaluation {
  RecognitionResult recognition;
  BindingResult binding;
};

// Mean with a two-sided 95% Student-t confidence interval.
struct SeedAggregate {
  int n_seeds = 0;
  double mean = 0.0;
  double ci_half_width = 0.0;
};

// Maps a target name to its attribute category; nullopt means "object".
// UnknownAttributeError on anything else.
std::optional<AttrCategory> resolve_eval_target(const std::string& target);
int target_candidate_count(const std::string& target);

// Exchanges the target values (digit classes for "object") between the two
// described objects; applying it twice is the identity.
std::vector<DescribedObject> swapped_objects(std::vector<DescribedObject> objects,
                                             const std::string& target);

// EmptyEvalSetError on an empty set; ConfigError when a record does not carry
// two captioned objects with the target described on both and differing.
RecognitionResult recognition_accuracy(Scorer& scorer, const std::vector<PairRecord>& records,
                                       const std::string& target);

// Requires recog computed on the same records. Ties lose, strictly. Both the
// filtered and the unfiltered accuracy come from one scoring pass.
// AllSamplesFilteredError when the attribute is kept but no record survives.
BindingResult binding_accuracy(Scorer& scorer, const std::vector<PairRecord>& records,
                               const std::string& target, const RecognitionResult& recog);

TargetEvaluation evaluate_target(Scorer& scorer, const std::vector<PairRecord>& records,
                                 const std::string& target);

// InsufficientSeedsError below two values.
SeedAggregate aggregate_seeds(const std::vector<double>& per_seed_values);

// Rows ordered color, scaling, fracture, rotation, swelling, thickness, then
// any remaining targets in input order. Excluded attributes render their
// binding cell as "filtered" (null in JSON).
nlohmann::json evaluation_json(const std::vector<TargetEvaluation>& evals);
std::string evaluation_csv(const std::vector<TargetEvaluation>& evals);

}  // namespace madgrid
