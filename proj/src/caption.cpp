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

#include "madgrid/caption.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace madgrid {

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<start>", "<end>", "and"};
  const auto& catalog = AttributeCatalog::instance();
  for (AttrCategory c : kAllCategories) {
    attr_base_[static_cast<int>(c)] = static_cast<int>(tokens_.size());
    for (const auto& v : catalog.category(c).values) tokens_.push_back(v);
  }
  digit_base_ = static_cast<int>(tokens_.size());
  for (int d = 0; d < 10; ++d) tokens_.push_back(std::to_string(d));
  for (size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = static_cast<int>(i);
}

const Vocabulary& Vocabulary::instance() {
  static Vocabulary vocab;
  return vocab;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw UnknownTokenError("unknown token '" + token + "'");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw IdOutOfRangeError("token id " + std::to_string(id));
  return tokens_[id];
}

int Vocabulary::digit_token_id(int digit_class) const {
  if (digit_class < 0 || digit_class > 9)
    throw IdOutOfRangeError("digit class " + std::to_string(digit_class));
  return digit_base_ + digit_class;
}

int Vocabulary::attr_token_id(AttrCategory c, int value_index) const {
  const auto& catalog = AttributeCatalog::instance();
  if (value_index < 0 || value_index >= catalog.value_count(c))
    throw IdOutOfRangeError("attr value index " + std::to_string(value_index));
  return attr_base_[static_cast<int>(c)] + value_index;
}

std::string Vocabulary::to_json() const {
  std::ostringstream os;
  os << "{\n";
  for (size_t i = 0; i < tokens_.size(); ++i)
    os << "  \"" << tokens_[i] << "\": " << i << (i + 1 < tokens_.size() ? "," : "") << "\n";
  os << "}\n";
  return os.str();
}

double AttrCountDistribution::mean() const {
  double m = 0;
  for (int k = 0; k < 7; ++k) m += k * p[k];
  return m;
}

int AttrCountDistribution::sample(Rng& rng) const {
  double u = rng.uniform();
  double acc = 0;
  for (int k = 0; k < 7; ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  return 6;
}

AttrCountDistribution AttrCountDistribution::point_mass(int k) {
  if (k < 0 || k > 6) throw IdOutOfRangeError("attr count " + std::to_string(k));
  AttrCountDistribution d;
  d.p[k] = 1.0;
  return d;
}

bool AttrCountDistribution::mass_constraint_feasible(double target_mean) {
  // With p(3)+p(4) = 0.35 the mean is confined to (0.35*3, 0.35*4 + 0.65*6);
  // keep a margin so the maximized entropy solution stays non-degenerate.
  return target_mean > 1.06 && target_mean < 5.29;
}

AttrCountDistribution AttrCountDistribution::from_mean(double target_mean) {
  if (target_mean <= 0.0) return point_mass(0);
  if (target_mean >= 6.0) return point_mass(6);
  const bool constrained = mass_constraint_feasible(target_mean);

  auto family = [&](double lambda) {
    AttrCountDistribution d;
    for (int k = 0; k < 7; ++k) d.p[k] = std::exp(lambda * k);
    if (constrained) {
      double s34 = d.p[3] + d.p[4];
      double total = std::accumulate(d.p.begin(), d.p.end(), 0.0);
      double boost = 0.35 * (total - s34) / (0.65 * s34);
      d.p[3] *= boost;
      d.p[4] *= boost;
    }
    double z = std::accumulate(d.p.begin(), d.p.end(), 0.0);
    for (auto& x : d.p) x /= z;
    return d;
  };

  double lo = -40.0, hi = 40.0;
  for (int iter = 0; iter < 200; ++iter) {
    double mid = (lo + hi) / 2;
    (family(mid).mean() < target_mean ? lo : hi) = mid;
  }
  return family((lo + hi) / 2);
}

std::vector<std::string> render_caption(const std::vector<DescribedObject>& objects) {
  if (objects.empty() || objects.size() > 2)
    throw InvalidObjectCountError("caption must describe 1 or 2 objects, got " +
                                  std::to_string(objects.size()));
  std::vector<std::string> out{"<start>"};
  for (size_t i = 0; i < objects.size(); ++i) {
    if (i > 0) out.push_back("and");
    const auto& o = objects[i];
    if (o.digit_class < 0 || o.digit_class > 9)
      throw IdOutOfRangeError("digit class " + std::to_string(o.digit_class));
    for (AttrCategory c : kAllCategories)
      if (o.described[static_cast<int>(c)]) out.push_back(o.attributes.value_name(c));
    out.push_back(std::to_string(o.digit_class));
  }
  out.push_back("<end>");
  return out;
}

std::vector<int> tokenize(const std::vector<std::string>& tokens) {
  if (tokens.size() > kContextLength)
    throw ShapeMismatchError("caption longer than context length");
  const auto& vocab = Vocabulary::instance();
  std::vector<int> ids(kContextLength, Vocabulary::kPadId);
  for (size_t i = 0; i < tokens.size(); ++i) ids[i] = vocab.id(tokens[i]);
  return ids;
}

std::vector<std::string> detokenize(const std::vector<int>& ids) {
  const auto& vocab = Vocabulary::instance();
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == Vocabulary::kPadId) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::vector<ParsedObject> parse_caption(const std::vector<std::string>& tokens) {
  const auto& catalog = AttributeCatalog::instance();
  size_t i = 0;
  auto fail = [&](const std::string& why) -> void {
    throw CorruptRecordError("caption parse at position " + std::to_string(i) + ": " + why);
  };
  auto at = [&]() -> const std::string& {
    if (i >= tokens.size()) fail("unexpected end");
    return tokens[i];
  };

  if (tokens.empty() || tokens[0] != "<start>") fail("missing <start>");
  i = 1;

  std::vector<ParsedObject> objects;
  while (true) {
    ParsedObject obj;
    int last_category = -1;
    bool saw_digit = false;
    while (!saw_digit) {
      const std::string& tok = at();
      if (tok.size() == 1 && tok[0] >= '0' && tok[0] <= '9') {
        obj.digit_class = tok[0] - '0';
        saw_digit = true;
        ++i;
        continue;
      }
      int category = -1, value = -1;
      for (AttrCategory cc : kAllCategories) {
        const auto& values = catalog.category(cc).values;
        for (size_t vi = 0; vi < values.size(); ++vi)
          if (values[vi] == tok) {
            category = static_cast<int>(cc);
            value = static_cast<int>(vi);
          }
      }
      if (category < 0) fail("not an attribute value or digit: '" + tok + "'");
      if (category <= last_category) fail("attribute out of canonical order");
      last_category = category;
      obj.values[category] = value;
      ++i;
    }
    objects.push_back(obj);
    const std::string& next = at();
    if (next == "and") {
      if (objects.size() == 2) fail("more than two objects");
      ++i;
      continue;
    }
    if (next == "<end>") {
      ++i;
      break;
    }
    fail("expected 'and' or '<end>'");
  }
  if (i != tokens.size()) fail("trailing tokens after <end>");
  return objects;
}

std::array<bool, kCategoryCount> sample_attr_subset(int n_a, Rng& rng) {
  if (n_a < 0 || n_a > kCategoryCount)
    throw IdOutOfRangeError("attr subset size " + std::to_string(n_a));
  std::vector<int> cats(kCategoryCount);
  std::iota(cats.begin(), cats.end(), 0);
  rng.shuffle(cats);
  std::array<bool, kCategoryCount> subset{};
  for (int j = 0; j < n_a; ++j) subset[cats[j]] = true;
  return subset;
}

}  // namespace madgrid
