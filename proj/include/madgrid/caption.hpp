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
#include <string>
#include <unordered_map>
#include <vector>

#include "madgrid/common.hpp"
#include "madgrid/transforms.hpp"

namespace madgrid {

// Text-side sequence length every caption is padded to.
constexpr int kContextLength = 20;

// Longest possible caption: two objects with all six attributes verbalized,
// joined by "and", wrapped in <start>/<end>.
constexpr int kMaxCaptionTokens = 2 * (kCategoryCount + 1) + 1 + 2;  // = 17

// Fixed 33-token vocabulary: 4 specials, 19 attribute values in canonical
// category order, 10 digit classes. Ids never change across runs.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kStartId = 1;
  static constexpr int kEndId = 2;
  static constexpr int kAndId = 3;

  static const Vocabulary& instance();

  int size() const { return static_cast<int>(tokens_.size()); }
  bool has(const std::string& token) const { return ids_.count(token) > 0; }
  int id(const std::string& token) const;           // UnknownTokenError
  const std::string& token(int id) const;           // IdOutOfRangeError
  int digit_token_id(int digit_class) const;        // IdOutOfRangeError
  // Id of an attribute value token, by category and value index.
  int attr_token_id(AttrCategory c, int value_index) const;
  std::string to_json() const;                      // token -> id map

 private:
  Vocabulary();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::array<int, kCategoryCount> attr_base_{};  // first id of each category block
  int digit_base_ = 0;
};

// Distribution of the number of verbalized attributes per object, on {0..6}.
struct AttrCountDistribution {
  std::array<double, 7> p{};

  double mean() const;
  int sample(Rng& rng) const;

  // Maximum-entropy distribution with the given mean. When the target mean
  // admits it, the total mass on {3,4} is pinned to 0.35 (matching the named
  // presets); outside the feasible band the mass constraint is dropped.
  static AttrCountDistribution from_mean(double target_mean);
  static AttrCountDistribution point_mass(int k);

  // True when from_mean(target) can hold p(3)+p(4) = 0.35.
  static bool mass_constraint_feasible(double target_mean);
};

// One verbalized object: its digit class, its full attribute map, and which
// categories the caption mentions.
struct DescribedObject {
  int digit_class = 0;
  AttributeAssignment attributes;
  std::array<bool, kCategoryCount> described{};

  bool operator==(const DescribedObject&) const = default;
};

// Object recovered by the reference parser; values[c] = -1 when the caption
// does not mention category c.
struct ParsedObject {
  int digit_class = 0;
  std::array<int, kCategoryCount> values = {-1, -1, -1, -1, -1, -1};

  bool operator==(const ParsedObject&) const = default;
};

// Grammar: <start> NP (and NP)? <end>; NP = value-token* digit-token with the
// value tokens in canonical category order.
std::vector<std::string> render_caption(const std::vector<DescribedObject>& objects);

// Pads with <pad> to kContextLength. UnknownTokenError on out-of-vocabulary.
std::vector<int> tokenize(const std::vector<std::string>& tokens);
// Inverse of tokenize up to pad stripping. IdOutOfRangeError on a bad id.
std::vector<std::string> detokenize(const std::vector<int>& ids);

// Strict reference parser for the grammar above; throws CorruptRecordError on
// anything render_caption could not have produced.
std::vector<ParsedObject> parse_caption(const std::vector<std::string>& tokens);

// n_a categories drawn uniformly without replacement from the six.
std::array<bool, kCategoryCount> sample_attr_subset(int n_a, Rng& rng);

}  // namespace madgrid
