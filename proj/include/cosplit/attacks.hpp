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

#ifndef COSPLIT_ATTACKS_HPP_
#define COSPLIT_ATTACKS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cosplit/datasets.hpp"
#include "cosplit/dp.hpp"
#include "cosplit/keygen.hpp"
#include "cosplit/network.hpp"
#include "cosplit/training.hpp"

namespace cosplit {

// --- model inversion -------------------------------------------------------

enum class InversionInit { kZeros, kUniform };

struct InversionConfig {
  std::size_t steps = 300;
  double step_size = 0.1;
  InversionInit init = InversionInit::kZeros;
  std::uint64_t seed = 0;      // used by kUniform
  std::size_t max_halvings = 10;

  void validate() const;
};

struct InversionResult {
  Tensor x;                        // recovered inputs, one row per target
  std::vector<double> objective;   // final ||f(x) - z||^2 per row
};

// Gradient descent on ||f(s) - z||^2 for every row of z independently. A
// step that increases the objective is halved until it does not (at most
// max_halvings times); rejected steps leave the iterate unchanged.
InversionResult Invert(const Network& model, const Tensor& z, const InversionConfig& cfg,
                       std::vector<double>* trace = nullptr);

// --- similarity --------------------------------------------------------------

double Mse(const Tensor& a, const Tensor& b);

inline constexpr std::size_t kSsimWindow = 8;
// Mean SSIM over all 8x8 windows (stride 1), dynamic range 1.
double Ssim(const Tensor& a, const Tensor& b);

// --- statistics --------------------------------------------------------------

struct PairedTest {
  double mean_diff = 0.0;
  double t = 0.0;
  double p_value = 1.0;  // one-sided, H1: mean(a - b) > 0
};
PairedTest PairedTTestGreater(std::span<const double> a, std::span<const double> b);

struct InversionRow {
  std::size_t sample_id = 0;
  double mse = 0.0;
  std::optional<double> ssim;
};
std::string FormatInversionReport(std::span<const InversionRow> rows);

// --- shadow-model attack ---------------------------------------------------

struct ShadowConfig {
  TrainConfig train;            // shadow fine-tuning (dp is the deployment setting)
  std::size_t gamma_hidden = 32;
  std::size_t gamma_epochs = 30;
  double gamma_lr = 0.1;
  std::size_t gamma_draws = 1;  // noisy IR draws per public sample
  std::size_t max_classes = 4;  // enumerating D_N mappings is only feasible for small N
  bool include_identity = false;
  std::uint64_t seed = 1;
};

struct ShadowEnsemble {
  std::vector<Permutation> mappings;
  std::vector<Network> shadows;  // one front-end per mapping
  Network gamma;                 // IR -> mapping index
  DpConfig dp;
};

ShadowEnsemble TrainShadows(const Network& original_front, const Network& back_end,
                            const LabeledSet& public_data, const ShadowConfig& cfg);

// Predicted mapping index per IR row.
std::vector<std::uint32_t> ClassifyMapping(const ShadowEnsemble& ens, const Tensor& ir);

// Fraction of rows where the predicted mapping index equals the true one. For
// two candidates this is 1 - mean(idx XOR prediction).
double AttackAccuracy(std::span<const std::uint32_t> predicted, std::uint32_t true_index);

// Index of `key` in the ensemble's mapping list.
std::uint32_t MappingIndex(const ShadowEnsemble& ens, const Permutation& key);

}  // namespace cosplit

#endif  // COSPLIT_ATTACKS_HPP_
