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

#ifndef COSPLIT_DP_HPP_
#define COSPLIT_DP_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cosplit/network.hpp"
#include "cosplit/rng.hpp"
#include "cosplit/tensor.hpp"

namespace cosplit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class NoiseScaleRule {
  kTwoBoundOverEpsilon,  // Lap(2B / epsilon), the algorithm listing
  kBoundOverEpsilon,     // Lap(B / epsilon), the budget proof
};

enum class XiNorm {
  kMaxAbsEntry,  // max |J_ij|
  kInducedInf,   // max_i sum_j |J_ij|
};

// Differentially private transformation settings. An infinite bound disables
// clipping and an infinite epsilon disables noise, so Disabled() is an exact
// pass-through of the front-end.
struct DpConfig {
  double bound = kInf;
  double epsilon = kInf;
  double eta = 0.0;
  // Number of front-end layers before the noise cut; nullopt = after the last.
  std::optional<std::size_t> noise_layer_index;
  NoiseScaleRule scale_rule = NoiseScaleRule::kTwoBoundOverEpsilon;
  XiNorm xi_norm = XiNorm::kMaxAbsEntry;

  static DpConfig Disabled() { return {}; }

  void validate(std::size_t front_depth) const;
  std::size_t cut(std::size_t front_depth) const;
  // Laplace scale for the configured rule; 0 when noise is disabled.
  double noise_scale() const;
};

struct NullificationMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> keep;  // 1 = element kept, 0 = nullified
  std::size_t zero_count = 0;
};

struct PrivacyReceipt {
  double bound = kInf;
  double epsilon = kInf;
  double eta = 0.0;
  double xi = 1.0;
  double epsilon_total = kInf;
  std::uint64_t calib_hash = 0;
  bool degenerate_xi = false;

  // key=value lines: B, epsilon, eta, xi, epsilon_total, calib_hash.
  std::string to_text() const;
  static PrivacyReceipt FromText(const std::string& text);
};

Tensor SampleLaplace(double scale, const std::vector<std::size_t>& shape, Rng& rng);

// Zeroes each element independently with probability eta.
std::pair<Tensor, NullificationMask> Nullify(const Tensor& x, double eta, Rng& rng);

// Row-wise x / max(1, ||x||_inf / B).
Tensor ClipInf(const Tensor& x, double bound);

// ln((1 - eta) e^{epsilon/xi} + eta). Throws kDegenerateXi for xi == 0.
double PrivacyBudget(double epsilon, double eta, double xi);
PrivacyReceipt MakeReceipt(const DpConfig& cfg, double xi, std::uint64_t calib_hash);

// Jacobian magnitude of layers [begin, end) of net at x_r, maximized over the
// batch. One reverse pass per output coordinate.
// Median over rows of ||f1(x)||_inf, where f1 is front layers [0, cut). A
// data-driven clipping bound that clips roughly half the rows.
double CalibrateBound(const Network& front, std::size_t cut, const Tensor& x);

double EstimateXi(const Network& net, std::size_t begin, std::size_t end, const Tensor& x_r,
                  XiNorm norm = XiNorm::kMaxAbsEntry);
double EstimateXi(const Network& f2, const Tensor& x_r, XiNorm norm = XiNorm::kMaxAbsEntry);

struct DpForward {
  Tensor output;     // noisy intermediate representation
  Tensor clipped;    // f1 output after clipping, before noise
  PrivacyReceipt receipt;
  NullificationMask mask;
  // Backward state.
  GradientTape f1_tape;
  GradientTape f2_tape;
  std::vector<double> row_norm;         // ||f1 row||_inf before clipping
  std::vector<std::size_t> row_argmax;  // coordinate attaining the norm
};

// nullify -> f1 -> clip -> + Laplace -> f2, over the layers of front.
DpForward DpTransform(const Network& front, const Tensor& x_l, const DpConfig& cfg, Rng& rng);

// Chains per-sample dl/d(output) back through f2, the clip and f1. Noise is
// additive so it passes gradients unchanged.
BackwardResult DpBackward(const Network& front, const DpForward& fwd, const DpConfig& cfg,
                          const Tensor& upstream);

struct HistogramOptions {
  std::size_t bins = 201;
  std::size_t min_count = 5000;
};

// max over shared bins (both counts >= min_count) of |ln(count_a / count_b)|.
double EmpiricalEpsilon(std::span<const double> a, std::span<const double> b,
                        const HistogramOptions& opts = {});

using ScalarFn = std::function<double(std::span<const double>)>;

inline constexpr std::size_t kMinVerifierSamples = 100000;

// Empirical epsilon of f(.) + a Lap(2B / sigma) on the pair (x, x_prime).
double VerifyDpScalar(const ScalarFn& f, std::span<const double> x,
                      std::span<const double> x_prime, double bound, double a, double sigma,
                      std::size_t n_samples, Rng& rng, const HistogramOptions& opts = {});

// Empirical epsilon of f(x . I_p) + Lap(2B / epsilon) with Bernoulli(eta)
// nullification of each input element.
double VerifyDpNullified(const ScalarFn& f, std::span<const double> x,
                         std::span<const double> x_prime, double bound, double eta,
                         double epsilon, std::size_t n_samples, Rng& rng,
                         const HistogramOptions& opts = {});

}  // namespace cosplit

#endif  // COSPLIT_DP_HPP_
