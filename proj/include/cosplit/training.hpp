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

#ifndef COSPLIT_TRAINING_HPP_
#define COSPLIT_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cosplit/datasets.hpp"
#include "cosplit/dp.hpp"
#include "cosplit/keygen.hpp"
#include "cosplit/network.hpp"
#include "cosplit/rng.hpp"
#include "cosplit/session.hpp"

namespace cosplit {

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kDiscLogitClamp = 30.0;

// Cross-entropy of post-softmax rows against the permuted targets key(y).
double LossClass(const Tensor& probs, std::span<const std::uint32_t> labels,
                 const Permutation& key);
// Per-sample gradient of the loss terms with respect to probs.
Tensor LossClassGrad(const Tensor& probs, std::span<const std::uint32_t> labels,
                     const Permutation& key);

// IR -> scalar probability that the IR came from the unprotected front-end.
class Discriminator {
 public:
  Discriminator(std::size_t ir_width, Rng& rng);
  explicit Discriminator(Network net);

  // Probabilities in (0, 1), one per row.
  std::vector<double> prob(const Tensor& z) const;

  struct Eval {
    double value = 0.0;        // V over the pooled batch
    ParamGrads param_grads;    // dV/dpi
    Tensor real_grad;          // per-sample dv_i/dz_i for the real rows
    Tensor protected_grad;     // per-sample dv_i/dz_i for the protected rows
  };
  // Value and gradients of V with real rows labelled 1, protected rows 0.
  Eval evaluate(const Tensor& real_ir, const Tensor& protected_ir) const;

  Network& net() { return net_; }
  const Network& net() const { return net_; }

 private:
  Network net_;
};

// Log-likelihood value V of the discriminator on a real/protected batch.
double LossDistValue(const Discriminator& disc, const Tensor& real_ir,
                     const Tensor& protected_ir);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr_theta = 0.1;
  double lr_pi = 0.05;
  double lambda = 1.0;
  std::size_t disc_pretrain_epochs = 3;
  DpConfig dp;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainLogRow {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss_class = 0.0;
  double v = 0.0;
  double epsilon_total = 0.0;
};

std::string FormatTrainLog(std::span<const TrainLogRow> rows);

struct TrainResult {
  Discriminator disc;
  std::vector<TrainLogRow> log;
};

using BatchCallback = std::function<void(const TrainLogRow&)>;

// Discriminator warm-up on real-vs-protected IR with the front-end frozen.
void PretrainDiscriminator(Discriminator& disc, const Network& front,
                           const Network& original_front, const LabeledSet& data,
                           const TrainConfig& cfg, Rng& rng);

// Min-max training over the split protocol. The device's front-end is
// updated in place; the edge back-end is never touched.
TrainResult HybridTrain(SplitDevice& device, const Network& original_front,
                        const LabeledSet& data, const Permutation& key, const TrainConfig& cfg,
                        const BatchCallback& on_batch = {});

// Plain cross-entropy training of a full model ending in softmax.
// Returns the mean training loss of each epoch.
std::vector<double> PretrainBackbone(Network& model, const LabeledSet& data,
                                     const TrainConfig& cfg);

Network MakeBackbone(std::span<const std::size_t> widths, std::uint64_t seed);

double Accuracy(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> labels);

struct SplitAccuracy {
  double decrypted = 0.0;
  double raw = 0.0;
};
SplitAccuracy EvaluateSplit(SplitDevice& device, const LabeledSet& data, const Permutation& key,
                            Rng& rng);

}  // namespace cosplit

#endif  // COSPLIT_TRAINING_HPP_
