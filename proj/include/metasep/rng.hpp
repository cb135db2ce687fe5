// metasep/rng.hpp

// Copyright 2026  The metasep authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef METASEP_RNG_HPP_
#define METASEP_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "metasep/errors.hpp"

namespace metasep {

// All randomness in the library flows through this wrapper. std::mt19937_64
// has a standardized output sequence, and we implement the value transforms
// ourselves because the standard distributions are implementation-defined;
// this keeps runs reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw InvalidInput("uniform_int: n must be positive");
    // Rejection sampling to avoid modulo bias.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller. One fresh pair per call, second value
  // discarded, so the stream position is a pure function of the call count.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T> *v) {
    for (size_t i = v->size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap((*v)[i - 1], (*v)[j]);
    }
  }

  // Engine state round-trips through text, which is what checkpoints store.
  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string &state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw FormatError("Rng::deserialize: malformed engine state");
  }

 private:
  std::mt19937_64 engine_;
};

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

// Named substream seed: components (corpus, tasks, train, eval) derive their
// own streams from one global seed, so any stage can be re-run independently.
inline uint64_t substream_seed(uint64_t root, std::string_view name) {
  return detail::splitmix64(root ^ detail::fnv1a(name));
}

// Indexed substream, e.g. one stream per task: (seed, name, index).
inline uint64_t substream_seed(uint64_t root, std::string_view name,
                               uint64_t index) {
  return detail::splitmix64(substream_seed(root, name) ^
                            detail::splitmix64(index + 0x9e3779b9ULL));
}

}  // namespace metasep

#endif  // METASEP_RNG_HPP_
