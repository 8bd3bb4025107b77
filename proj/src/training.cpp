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

#include "cosplit/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cosplit/error.hpp"

namespace cosplit {

namespace {

void CheckLabels(const Tensor& probs, std::span<const std::uint32_t> labels,
                 const Permutation& key) {
  if (probs.rank() != 2 || probs.rows() != labels.size()) {
    throw Error(Errc::kDimensionMismatch, "probability rows != label count");
  }
  if (key.size() != probs.cols()) {
    throw Error(Errc::kDimensionMismatch, "key size != class count");
  }
  for (std::uint32_t y : labels) {
    if (y >= probs.cols()) throw Error(Errc::kIndexOutOfRange, "label out of range");
  }
}

std::vector<std::size_t> Iota(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void ShuffleInPlace(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
}

std::vector<std::uint32_t> GatherLabels(const LabeledSet& data, std::span<const std::size_t> idx) {
  std::vector<std::uint32_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data.labels[i]);
  return out;
}

}  // namespace

double LossClass(const Tensor& probs, std::span<const std::uint32_t> labels,
                 const Permutation& key) {
  CheckLabels(probs, labels, key);
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sum -= std::log(std::max(probs(i, key.encrypt(labels[i])), kProbFloor));
  }
  return sum / static_cast<double>(labels.size());
}

Tensor LossClassGrad(const Tensor& probs, std::span<const std::uint32_t> labels,
                     const Permutation& key) {
  CheckLabels(probs, labels, key);
  Tensor g(probs.shape());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint32_t c = key.encrypt(labels[i]);
    const double p = probs(i, c);
    g(i, c) = p > kProbFloor ? -1.0 / p : 0.0;
  }
  return g;
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(std::size_t ir_width, Rng& rng) {
  const std::size_t widths[] = {ir_width, ir_width, 1};
  net_ = MakeMlp(widths, false, rng);
}

Discriminator::Discriminator(Network net) : net_(std::move(net)) {
  if (net_.output_dim() != 1) throw Error(Errc::kInvalidArgument, "discriminator must output 1");
}

namespace {

double Sigmoid(double a) {
  const double c = std::clamp(a, -kDiscLogitClamp, kDiscLogitClamp);
  return 1.0 / (1.0 + std::exp(-c));
}

}  // namespace

std::vector<double> Discriminator::prob(const Tensor& z) const {
  const Tensor a = Predict(net_, z.as_matrix());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = Sigmoid(a[i]);
  return out;
}

Discriminator::Eval Discriminator::evaluate(const Tensor& real_ir,
                                            const Tensor& protected_ir) const {
  const Tensor real = real_ir.as_matrix();
  const Tensor prot = protected_ir.as_matrix();
  if (real.rows() != prot.rows() || real.cols() != prot.cols()) {
    throw Error(Errc::kDimensionMismatch, "real and protected batches differ in shape");
  }
  const std::size_t m = real.rows();
  const std::size_t w = real.cols();
  Tensor pooled = Tensor::Zeros(2 * m, w);
  std::copy(real.data().begin(), real.data().end(), pooled.data().begin());
  std::copy(prot.data().begin(), prot.data().end(), pooled.data().begin() + m * w);

  const ForwardResult fwd = Forward(net_, pooled);
  Tensor upstream = Tensor::Zeros(2 * m, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < 2 * m; ++i) {
    const double a = fwd.output[i];
    const double t = i < m ? 1.0 : 0.0;
    const double d = std::clamp(Sigmoid(a), kProbFloor, 1.0 - kProbFloor);
    sum += t * std::log(d) + (1.0 - t) * std::log(1.0 - d);
    upstream[i] = std::abs(a) < kDiscLogitClamp ? t - d : 0.0;
  }
  BackwardResult back = Backward(net_, fwd.tape, upstream);
  Eval e;
  e.value = sum / static_cast<double>(2 * m);
  e.param_grads = std::move(back.param_grads);
  e.real_grad = back.input_grad.slice_rows(0, m);
  e.protected_grad = back.input_grad.slice_rows(m, 2 * m);
  return e;
}

double LossDistValue(const Discriminator& disc, const Tensor& real_ir,
                     const Tensor& protected_ir) {
  const Tensor real = real_ir.as_matrix();
  const Tensor prot = protected_ir.as_matrix();
  if (real.rows() != prot.rows()) {
    throw Error(Errc::kDimensionMismatch, "real and protected batch sizes differ");
  }
  const auto pr = disc.prob(real);
  const auto pp = disc.prob(prot);
  double sum = 0.0;
  for (double d : pr) sum += std::log(std::clamp(d, kProbFloor, 1.0 - kProbFloor));
  for (double d : pp) sum += std::log(1.0 - std::clamp(d, kProbFloor, 1.0 - kProbFloor));
  return sum / static_cast<double>(pr.size() + pp.size());
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs > 100000) throw Error(Errc::kInvalidArgument, "epochs out of range");
  if (batch_size == 0 || batch_size > kBatchMax) {
    throw Error(Errc::kInvalidArgument, "batch size must lie in [1, 4096]");
  }
  if (!(lr_theta > 0.0) || !(lr_pi > 0.0) || !std::isfinite(lr_theta) || !std::isfinite(lr_pi)) {
    throw Error(Errc::kInvalidArgument, "learning rates must be positive");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(Errc::kInvalidArgument, "lambda must be >= 0");
  }
}

std::string FormatTrainLog(std::span<const TrainLogRow> rows) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& r : rows) {
    out << r.epoch << '\t' << r.batch << '\t' << r.loss_class << '\t' << r.v << '\t'
        << r.epsilon_total << '\n';
  }
  return out.str();
}

void PretrainDiscriminator(Discriminator& disc, const Network& front,
                           const Network& original_front, const LabeledSet& data,
                           const TrainConfig& cfg, Rng& rng) {
  auto order = Iota(data.size());
  for (std::size_t epoch = 0; epoch < cfg.disc_pretrain_epochs; ++epoch) {
    ShuffleInPlace(order, rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(cfg.batch_size, order.size() - start));
      const Tensor x = data.inputs.gather_rows(idx);
      const Tensor real = Predict(original_front, x);
      const DpForward prot = DpTransform(front, x, cfg.dp, rng);
      const auto e = disc.evaluate(real, prot.output);
      if (!std::isfinite(e.value)) throw Error(Errc::kNonFinite, "V diverged in warm-up");
      SgdStep(disc.net(), e.param_grads, -cfg.lr_pi);
    }
  }
}

TrainResult HybridTrain(SplitDevice& device, const Network& original_front,
                        const LabeledSet& data, const Permutation& key, const TrainConfig& cfg,
                        const BatchCallback& on_batch) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw Error(Errc::kInvalidArgument, "empty training set");
  Network& front = device.front();
  const auto ir = front.output_dim();
  if (!ir) throw Error(Errc::kInvalidArgument, "front-end has no affine layer");
  if (original_front.output_dim() != ir) {
    throw Error(Errc::kDimensionMismatch, "original front-end IR width differs");
  }

  Rng rng(cfg.seed);
  Rng disc_rng = rng.split();
  TrainResult result{Discriminator(*ir, disc_rng), {}};
  Discriminator& disc = result.disc;
  if (cfg.lambda > 0.0) {
    PretrainDiscriminator(disc, front, original_front, data, cfg, rng);
  }

  auto order = Iota(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ShuffleInPlace(order, rng);
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(cfg.batch_size, order.size() - start));
      const Tensor x = data.inputs.gather_rows(idx);
      const auto y = GatherLabels(data, idx);

      const DeviceRound& round = device.forward(x, rng);
      const double loss = LossClass(round.logits, y, key);
      const Tensor loss_grad = LossClassGrad(round.logits, y, key);
      const Tensor real = Predict(original_front, x);
      const Tensor& prot = round.dp.output;

      const auto e = disc.evaluate(real, prot);
      if (!std::isfinite(loss) || !std::isfinite(e.value)) {
        throw Error(Errc::kNonFinite, "loss became non-finite at epoch " + std::to_string(epoch) +
                                          " batch " + std::to_string(batch) +
                                          " (loss_class=" + std::to_string(loss) +
                                          ", V=" + std::to_string(e.value) + ")");
      }
      const double eps_total = round.dp.receipt.epsilon_total;

      Tensor extra;
      if (cfg.lambda > 0.0) {
        SgdStep(disc.net(), e.param_grads, -cfg.lr_pi);
        extra = disc.evaluate(real, prot).protected_grad;
        for (double& v : extra.data()) v *= 0.5 * cfg.lambda;
      }
      const BackwardResult grads =
          device.backward(loss, loss_grad, cfg.lambda > 0.0 ? &extra : nullptr);
      SgdStep(front, grads.param_grads, cfg.lr_theta);

      const TrainLogRow row{epoch, batch, loss, e.value, eps_total};
      result.log.push_back(row);
      if (on_batch) on_batch(row);
    }
    spdlog::debug("epoch {} done, last loss_class {}", epoch, result.log.back().loss_class);
  }
  return result;
}

std::vector<double> PretrainBackbone(Network& model, const LabeledSet& data,
                                     const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (model.empty() || !std::holds_alternative<Softmax>(model.layers().back().op)) {
    throw Error(Errc::kInvalidArgument, "backbone must end with softmax");
  }
  const Permutation id = Permutation::Identity(data.n_classes);
  Rng rng(cfg.seed);
  auto order = Iota(data.size());
  std::vector<double> epoch_loss;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ShuffleInPlace(order, rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(cfg.batch_size, order.size() - start));
      const Tensor x = data.inputs.gather_rows(idx);
      const auto y = GatherLabels(data, idx);
      const ForwardResult fwd = Forward(model, x);
      const double loss = LossClass(fwd.output, y, id);
      if (!std::isfinite(loss)) throw Error(Errc::kNonFinite, "backbone loss is non-finite");
      sum += loss * static_cast<double>(idx.size());
      const BackwardResult back = Backward(model, fwd.tape, LossClassGrad(fwd.output, y, id));
      SgdStep(model, back.param_grads, cfg.lr_theta);
    }
    epoch_loss.push_back(sum / static_cast<double>(data.size()));
  }
  return epoch_loss;
}

Network MakeBackbone(std::span<const std::size_t> widths, std::uint64_t seed) {
  Rng rng(seed);
  return MakeMlp(widths, true, rng);
}

double Accuracy(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> labels) {
  if (predicted.size() != labels.size()) {
    throw Error(Errc::kDimensionMismatch, "prediction count != label count");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

SplitAccuracy EvaluateSplit(SplitDevice& device, const LabeledSet& data, const Permutation& key,
                            Rng& rng) {
  const Permutation id = Permutation::Identity(key.size());
  std::vector<std::uint32_t> raw;
  for (std::size_t start = 0; start < data.size(); start += kBatchMax) {
    const std::size_t end = std::min<std::size_t>(data.size(), start + kBatchMax);
    const auto part = device.infer(data.inputs.slice_rows(start, end), id, rng);
    raw.insert(raw.end(), part.begin(), part.end());
  }
  std::vector<std::uint32_t> decrypted(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) decrypted[i] = key.decrypt(raw[i]);
  return {Accuracy(decrypted, data.labels), Accuracy(raw, data.labels)};
}

}  // namespace cosplit
