// Copyright 2026 The cosplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COSPLIT_RNG_HPP_
#define COSPLIT_RNG_HPP_

#include <cstdint>
#include <random>

namespace cosplit {

// Seeded 64-bit stream. All variates are derived from raw engine output with
// fixed formulas so a seed reproduces the same values on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // 53-bit uniform in [0, 1).
  std::uint64_t bits53() { return engine_() >> 11; }
  double uniform() { return static_cast<double>(bits53()) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n), n > 0.
  std::uint64_t below(std::uint64_t n);

  double normal();
  double laplace(double scale);
  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream; used to give parallel jobs their own RNG.
  Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cosplit

#endif  // COSPLIT_RNG_HPP_
