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

#include "cosplit/attacks.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cosplit/error.hpp"
#include "cosplit/session.hpp"

namespace cosplit {

void InversionConfig::validate() const {
  if (steps == 0) throw Error(Errc::kInvalidArgument, "inversion needs at least one step");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw Error(Errc::kInvalidArgument, "step size must be positive");
  }
}

namespace {

double Objective(const Network& model, const Tensor& s, const Tensor& z) {
  const Tensor y = Predict(model, s);
  double sum = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) sum += (y[k] - z[k]) * (y[k] - z[k]);
  return sum;
}

}  // namespace

InversionResult Invert(const Network& model, const Tensor& z, const InversionConfig& cfg,
                       std::vector<double>* trace) {
  cfg.validate();
  const auto in = model.input_dim();
  const auto out = model.output_dim();
  const Tensor targets = z.as_matrix();
  std::size_t in_dim = 0;
  if (in) {
    in_dim = *in;
    if (targets.cols() != *out) {
      throw Error(Errc::kDimensionMismatch, "target width does not match model output");
    }
  } else {
    in_dim = targets.cols();  // no affine layer: shape-preserving model
  }
  Rng rng(cfg.seed);
  InversionResult res{Tensor::Zeros(targets.rows(), in_dim), {}};
  for (std::size_t r = 0; r < targets.rows(); ++r) {
    const Tensor zr = targets.slice_rows(r, r + 1);
    Tensor s = Tensor::Zeros(1, in_dim);
    if (cfg.init == InversionInit::kUniform) {
      for (double& v : s.data()) v = rng.uniform();
    }
    double obj = Objective(model, s, zr);
    if (trace && r == 0) trace->push_back(obj);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      const ForwardResult fwd = Forward(model, s);
      Tensor up(fwd.output.shape());
      for (std::size_t k = 0; k < up.size(); ++k) up[k] = 2.0 * (fwd.output[k] - zr[k]);
      const Tensor g = Backward(model, fwd.tape, up, false).input_grad;
      if (!g.all_finite()) throw Error(Errc::kNonFinite, "inversion gradient is non-finite");
      double eta = cfg.step_size;
      bool accepted = false;
      for (std::size_t h = 0; h <= cfg.max_halvings; ++h, eta *= 0.5) {
        Tensor cand = s;
        for (std::size_t k = 0; k < cand.size(); ++k) cand[k] -= eta * g[k];
        const double c = Objective(model, cand, zr);
        if (!std::isfinite(c)) continue;
        if (c <= obj) {
          s = std::move(cand);
          obj = c;
          accepted = true;
          break;
        }
      }
      if (trace && r == 0) trace->push_back(obj);
      if (!accepted || obj == 0.0) break;
    }
    std::copy(s.data().begin(), s.data().end(), res.x.row(r).begin());
    res.objective.push_back(obj);
  }
  return res;
}

double Mse(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(Errc::kDimensionMismatch, "mse needs equal non-empty shapes");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double Ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw Error(Errc::kDimensionMismatch, "ssim shapes differ");
  if (a.rank() != 2 || a.rows() < kSsimWindow || a.cols() < kSsimWindow) {
    throw Error(Errc::kDimensionMismatch, "ssim needs 2-D images of at least 8x8");
  }
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  constexpr double kN = kSsimWindow * kSsimWindow;
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r0 = 0; r0 + kSsimWindow <= a.rows(); ++r0) {
    for (std::size_t c0 = 0; c0 + kSsimWindow <= a.cols(); ++c0) {
      double ma = 0.0;
      double mb = 0.0;
      for (std::size_t r = r0; r < r0 + kSsimWindow; ++r) {
        for (std::size_t c = c0; c < c0 + kSsimWindow; ++c) {
          ma += a(r, c);
          mb += b(r, c);
        }
      }
      ma /= kN;
      mb /= kN;
      double va = 0.0;
      double vb = 0.0;
      double cov = 0.0;
      for (std::size_t r = r0; r < r0 + kSsimWindow; ++r) {
        for (std::size_t c = c0; c < c0 + kSsimWindow; ++c) {
          const double da = a(r, c) - ma;
          const double db = b(r, c) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      }
      va /= kN;
      vb /= kN;
      cov /= kN;
      const double num = (2.0 * ma * mb + kC1) * (2.0 * cov + kC2);
      const double den = (ma * ma + mb * mb + kC1) * (va + vb + kC2);
      total += num / den;
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

PairedTest PairedTTestGreater(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(Errc::kInsufficientSamples, "paired test needs >= 2 equal-length samples");
  }
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double var = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    var += d * d;
  }
  var /= n - 1.0;
  PairedTest out;
  out.mean_diff = mean;
  if (var == 0.0) {
    out.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : (mean < 0 ? -std::numeric_limits<double>::infinity() : 0.0);
    out.p_value = mean > 0 ? 0.0 : (mean < 0 ? 1.0 : 0.5);
    return out;
  }
  out.t = mean / std::sqrt(var / n);
  const boost::math::students_t dist(n - 1.0);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.t));
  return out;
}

std::string FormatInversionReport(std::span<const InversionRow> rows) {
  std::ostringstream out;
  out.precision(10);
  const bool with_ssim = !rows.empty() && rows.front().ssim.has_value();
  out << "sample_id\tmse" << (with_ssim ? "\tssim" : "") << '\n';
  double sum_mse = 0.0;
  double sum_ssim = 0.0;
  for (const auto& r : rows) {
    out << r.sample_id << '\t' << r.mse;
    sum_mse += r.mse;
    if (with_ssim) {
      out << '\t' << r.ssim.value_or(0.0);
      sum_ssim += r.ssim.value_or(0.0);
    }
    out << '\n';
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  out << "mean_mse=" << sum_mse / n << '\n';
  if (with_ssim) out << "mean_ssim=" << sum_ssim / n << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

ShadowEnsemble TrainShadows(const Network& original_front, const Network& back_end,
                            const LabeledSet& public_data, const ShadowConfig& cfg) {
  const std::size_t n = public_data.n_classes;
  if (n > cfg.max_classes) {
    throw Error(Errc::kKeySpaceTooLarge, "N=" + std::to_string(n) + " exceeds the shadow cap " +
                                             std::to_string(cfg.max_classes));
  }
  const auto ir = original_front.output_dim();
  if (!ir) throw Error(Errc::kInvalidArgument, "front-end has no affine layer");

  ShadowEnsemble ens;
  ens.dp = cfg.train.dp;
  ens.mappings = EnumerateDerangements(n);
  if (cfg.include_identity) ens.mappings.insert(ens.mappings.begin(), Permutation::Identity(n));

  for (std::size_t j = 0; j < ens.mappings.size(); ++j) {
    Network front = original_front;
    front.set_trainable(true);
    LoopbackEdge edge(back_end);
    SplitDevice device(edge.session(), front, cfg.train.dp);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed * 1000003ULL + j;
    HybridTrain(device, original_front, public_data, ens.mappings[j], tc);
    edge.finish();
    front.set_trainable(false);
    ens.shadows.push_back(std::move(front));
  }

  // D_gamma sees noisy shadow IRs, as it would in deployment.
  Rng rng(cfg.seed ^ 0xa5a5a5a5ULL);
  LabeledSet irs;
  irs.n_classes = ens.mappings.size();
  const std::size_t m = public_data.size();
  const std::size_t draws = std::max<std::size_t>(cfg.gamma_draws, 1);
  irs.inputs = Tensor::Zeros(m * draws * ens.shadows.size(), *ir);
  std::size_t offset = 0;
  for (std::size_t j = 0; j < ens.shadows.size(); ++j) {
    for (std::size_t d = 0; d < draws; ++d) {
      const DpForward f = DpTransform(ens.shadows[j], public_data.inputs, ens.dp, rng);
      std::copy(f.output.data().begin(), f.output.data().end(),
                irs.inputs.data().begin() + offset);
      offset += f.output.size();
      irs.labels.insert(irs.labels.end(), m, static_cast<std::uint32_t>(j));
    }
  }
  const std::size_t widths[] = {*ir, cfg.gamma_hidden, ens.mappings.size()};
  ens.gamma = MakeBackbone(widths, rng.next());
  TrainConfig gc = cfg.train;
  gc.epochs = cfg.gamma_epochs;
  gc.lr_theta = cfg.gamma_lr;
  gc.seed = rng.next();
  PretrainBackbone(ens.gamma, irs, gc);
  ens.gamma.set_trainable(false);
  return ens;
}

std::vector<std::uint32_t> ClassifyMapping(const ShadowEnsemble& ens, const Tensor& ir) {
  return ArgmaxRows(Predict(ens.gamma, ir.as_matrix()));
}

double AttackAccuracy(std::span<const std::uint32_t> predicted, std::uint32_t true_index) {
  if (predicted.empty()) throw Error(Errc::kInsufficientSamples, "no attack predictions");
  std::size_t miss = 0;
  for (std::uint32_t p : predicted) miss += p != true_index;
  return 1.0 - static_cast<double>(miss) / static_cast<double>(predicted.size());
}

std::uint32_t MappingIndex(const ShadowEnsemble& ens, const Permutation& key) {
  for (std::size_t j = 0; j < ens.mappings.size(); ++j) {
    if (ens.mappings[j] == key) return static_cast<std::uint32_t>(j);
  }
  throw Error(Errc::kInvalidArgument, "key is not in the shadow key space");
}

}  // namespace cosplit
