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

#ifndef COSPLIT_REDUCTION_HPP_
#define COSPLIT_REDUCTION_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cosplit/network.hpp"
#include "cosplit/rng.hpp"
#include "cosplit/tensor.hpp"

namespace cosplit {

inline constexpr std::size_t kReductionMaxVars = 12;
inline constexpr std::size_t kReductionMaxClauses = 20;

// CNF formula with clauses of at most three literals. Literal +i is X_i,
// -i is NOT X_i (1-based).
struct CnfInstance {
  std::size_t n_vars = 0;
  std::vector<std::vector<int>> clauses;

  std::size_t n_clauses() const { return clauses.size(); }
  // Largest number of clauses any single variable appears in.
  std::size_t occurrence_bound() const;
  void validate() const;
  // True assignment bits: bit i set means X_{i+1} is true.
  bool satisfied(std::uint64_t assignment) const;
  std::size_t unsatisfied_count(std::uint64_t assignment) const;
};

CnfInstance ParseDimacs(std::string_view text);
std::string ToDimacs(const CnfInstance& f);

// Random instance with `m` clauses of three distinct variables each.
CnfInstance RandomE3Cnf(std::size_t n_vars, std::size_t n_clauses, Rng& rng);

struct ReductionDims {
  std::size_t p = 0;   // input width (= n)
  std::size_t m1 = 0;  // hidden width: m + 200 Q^2 n
  std::size_t o = 0;   // output width: m + 100 Q^2 n
};

// Two-layer ReLU network whose output hits the target exactly on encodings of
// satisfying assignments. The copy neurons repeat the same two hidden units
// 100 Q^2 times per variable; `compact` evaluates one representative per
// group and `multiplicity` says how many output coordinates it stands for.
struct ReductionNet {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t q = 0;
  std::size_t copies = 0;  // 100 Q^2 per variable
  ReductionDims dims;

  Tensor w1_clauses;  // [m x n], entries in {-1, 0, +1}
  Tensor b_clauses;   // [m]
  Network compact;    // Affine(m+2n <- n), ReLU, Affine(m+n <- m+2n)
  std::vector<std::size_t> multiplicity;  // per compact output: 1 or copies
  Tensor compact_target;                  // [m+n]: zeros then ones

  // Squared distance ||f(x) - x_r||^2 per row of x, via the compact network.
  std::vector<double> squared_distance(const Tensor& x) const;
  // Full-width outputs f(x) [rows x o], expanded from the compact network.
  Tensor expand(const Tensor& compact_out) const;
  Tensor target() const;  // x_r, length o

  // The literal m1-wide network. Throws TooLarge past a few million weights.
  Network to_dense_network() const;
};

ReductionNet BuildReduction(const CnfInstance& f);

// x_i = -1 encodes X_i true, +1 false.
Tensor EncodeAssignments(std::size_t n, std::uint64_t begin, std::uint64_t end);
// Nearest point of {-1, +1}; ties (x_i = 0) go to +1.
Tensor RoundToSigns(const Tensor& x);

struct CompletenessReport {
  std::size_t satisfying = 0;
  std::size_t violations = 0;         // satisfying encodings that miss x_r
  std::size_t false_hits = 0;         // unsatisfying encodings that hit x_r
};
CompletenessReport CheckCompleteness(const ReductionNet& net, const CnfInstance& f);

struct SoundnessReport {
  double gamma = 0.0;
  double radius = 0.0;                // gamma * sqrt(o)
  bool asymptotic_bound_active = false;
  double asymptotic_bound = 0.0;      // (1/8 - 5/sqrt(Q)) m
  std::size_t within_radius = 0;
  std::size_t radius_violations = 0;
  std::size_t counting_violations = 0;  // unsat > ||f(x) - x_r||^2
  std::size_t count_mismatches = 0;     // unsat != sum of clause outputs
  double max_unsat_over_bound = 0.0;    // max of unsat - ||f(x) - x_r||^2
  std::size_t rounding_samples = 0;
  std::size_t rounding_violations = 0;
  double max_rounding_gap = 0.0;        // ||f(xbar)-x_r||^2 - ||f(x)-x_r||^2
};
SoundnessReport CheckSoundness(const ReductionNet& net, const CnfInstance& f, double gamma,
                               std::size_t rounding_samples, Rng& rng);

std::string FormatReductionReport(const std::string& instance, const ReductionNet& net,
                                  const CompletenessReport* c, const SoundnessReport* s);

}  // namespace cosplit

#endif  // COSPLIT_REDUCTION_HPP_
