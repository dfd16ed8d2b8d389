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

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace madgrid {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyImageError : Error { using Error::Error; };
struct UnknownAttributeError : Error { using Error::Error; };
struct InvalidObjectCountError : Error { using Error::Error; };
struct UnknownTokenError : Error { using Error::Error; };
struct IdOutOfRangeError : Error { using Error::Error; };
struct ShapeMismatchError : Error { using Error::Error; };
struct BatchTooSmallError : Error { using Error::Error; };
struct RejectionBudgetError : Error { using Error::Error; };
struct ManifestMismatchError : Error { using Error::Error; };
struct CorruptRecordError : Error { using Error::Error; };
struct EmptyEvalSetError : Error { using Error::Error; };
struct AllSamplesFilteredError : Error { using Error::Error; };
struct InsufficientSeedsError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// mt19937_64 plus hand-rolled draw helpers. The std::*_distribution adaptors
// are implementation-defined, which would make generated datasets depend on
// the standard library version; these helpers keep the byte stream a pure
// function of the seed.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and record ids, so
// generation order and worker layout never change the output.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0) {
  uint64_t h = splitmix64(base ^ 0x7c0ffee5deadbeefULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x51ed2700a5a5a5a5ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform integer in [0, n), exact via rejection.
  uint32_t uniform_u32(uint32_t n) {
    if (n == 0) throw Error("uniform_u32: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do { x = gen_(); } while (x >= limit);
    return static_cast<uint32_t>(x % n);
  }

  // Uniform double in [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, one value per draw.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_u32(static_cast<uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// FNV-1a 64-bit, used for content hashes in manifests and cache keys.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace madgrid
