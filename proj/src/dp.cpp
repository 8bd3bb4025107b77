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

#include "cosplit/dp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "cosplit/error.hpp"

namespace cosplit {

void DpConfig::validate(std::size_t front_depth) const {
  if (!(bound > 0.0)) throw Error(Errc::kInvalidArgument, "bound B must be positive");
  if (!(epsilon > 0.0)) throw Error(Errc::kInvalidArgument, "epsilon must be positive");
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error(Errc::kInvalidArgument, "eta must be in [0, 1]");
  if (noise_layer_index && *noise_layer_index > front_depth) {
    throw Error(Errc::kInvalidArgument, "noise layer index beyond front-end depth");
  }
}

std::size_t DpConfig::cut(std::size_t front_depth) const {
  return noise_layer_index.value_or(front_depth);
}

double DpConfig::noise_scale() const {
  if (std::isinf(epsilon)) return 0.0;
  if (std::isinf(bound)) {
    throw Error(Errc::kInvalidArgument, "Laplace noise requires a finite bound");
  }
  return scale_rule == NoiseScaleRule::kTwoBoundOverEpsilon ? 2.0 * bound / epsilon
                                                            : bound / epsilon;
}

std::string PrivacyReceipt::to_text() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "B=" << bound << '\n'
     << "epsilon=" << epsilon << '\n'
     << "eta=" << eta << '\n'
     << "xi=" << xi << '\n'
     << "epsilon_total=" << epsilon_total << '\n'
     << "calib_hash=" << HexDigest(calib_hash) << '\n';
  if (degenerate_xi) os << "warning=degenerate_xi\n";
  return os.str();
}

PrivacyReceipt PrivacyReceipt::FromText(const std::string& text) {
  PrivacyReceipt r;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "B") r.bound = std::stod(value);
      else if (key == "epsilon") r.epsilon = std::stod(value);
      else if (key == "eta") r.eta = std::stod(value);
      else if (key == "xi") r.xi = std::stod(value);
      else if (key == "epsilon_total") r.epsilon_total = std::stod(value);
      else if (key == "calib_hash") r.calib_hash = std::stoull(value, nullptr, 16);
      else if (key == "warning") r.degenerate_xi = value == "degenerate_xi";
    } catch (const std::exception&) {
      throw Error(Errc::kParseError, "bad receipt line: " + line);
    }
  }
  return r;
}

Tensor SampleLaplace(double scale, const std::vector<std::size_t>& shape, Rng& rng) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(Errc::kInvalidScale, "Laplace scale must be positive and finite");
  }
  Tensor t(shape);
  for (double& v : t.data()) v = rng.laplace(scale);
  return t;
}

std::pair<Tensor, NullificationMask> Nullify(const Tensor& x, double eta, Rng& rng) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error(Errc::kInvalidArgument, "eta must be in [0, 1]");
  Tensor out = x;
  NullificationMask mask{x.rows(), x.cols(), std::vector<std::uint8_t>(x.size(), 1), 0};
  if (eta == 0.0) return {std::move(out), std::move(mask)};
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (eta == 1.0 || rng.bernoulli(eta)) {
      out[i] = 0.0;
      mask.keep[i] = 0;
      ++mask.zero_count;
    }
  }
  return {std::move(out), std::move(mask)};
}

Tensor ClipInf(const Tensor& x, double bound) {
  if (!(bound > 0.0)) throw Error(Errc::kInvalidArgument, "bound must be positive");
  Tensor out = x;
  if (std::isinf(bound)) return out;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double d = 0.0;
    for (double v : row) d = std::max(d, std::fabs(v));
    const double scale = std::max(1.0, d / bound);
    if (scale > 1.0) {
      // Division can land one ulp above the bound.
      for (double& v : row) v = std::clamp(v / scale, -bound, bound);
    }
  }
  return out;
}

double PrivacyBudget(double epsilon, double eta, double xi) {
  if (!(epsilon > 0.0)) throw Error(Errc::kInvalidArgument, "epsilon must be positive");
  if (!(eta >= 0.0 && eta <= 1.0)) throw Error(Errc::kInvalidArgument, "eta must be in [0, 1]");
  if (!(xi >= 0.0)) throw Error(Errc::kInvalidArgument, "xi must be nonnegative");
  if (xi == 0.0) {
    throw Error(Errc::kDegenerateXi, "post-noise sub-network is locally constant (xi = 0)");
  }
  if (eta == 1.0) return 0.0;
  const double a = epsilon / xi;
  if (eta == 0.0) return a;
  if (std::isinf(a)) return a;
  // ln(1 + (1-eta)(e^a - 1)) for small a; a + ln(1 - eta(1 - e^{-a})) otherwise.
  if (a < 1.0) return std::log1p((1.0 - eta) * std::expm1(a));
  return a + std::log1p(eta * std::expm1(-a));
}

PrivacyReceipt MakeReceipt(const DpConfig& cfg, double xi, std::uint64_t calib_hash) {
  PrivacyReceipt r;
  r.bound = cfg.bound;
  r.epsilon = cfg.epsilon;
  r.eta = cfg.eta;
  r.xi = xi;
  r.calib_hash = calib_hash;
  try {
    r.epsilon_total = PrivacyBudget(cfg.epsilon, cfg.eta, xi);
  } catch (const Error& e) {
    if (e.code() != Errc::kDegenerateXi) throw;
    r.epsilon_total = 0.0;
    r.degenerate_xi = true;
  }
  return r;
}

double CalibrateBound(const Network& front, std::size_t cut, const Tensor& x) {
  const Tensor ir = ForwardRange(front, 0, cut, x.as_matrix()).output;
  std::vector<double> norms(ir.rows());
  for (std::size_t r = 0; r < ir.rows(); ++r) {
    double m = 0.0;
    for (double v : ir.row(r)) m = std::max(m, std::abs(v));
    norms[r] = m;
  }
  if (norms.empty()) throw Error(Errc::kInvalidArgument, "calibration batch is empty");
  std::nth_element(norms.begin(), norms.begin() + norms.size() / 2, norms.end());
  return norms[norms.size() / 2];
}

double EstimateXi(const Network& net, std::size_t begin, std::size_t end, const Tensor& x_r,
                  XiNorm norm) {
  const Tensor x = x_r.as_matrix();
  if (begin == end) return 1.0;  // identity Jacobian
  const ForwardResult fwd = ForwardRange(net, begin, end, x);
  const std::size_t batch = x.rows();
  const std::size_t out = fwd.output.cols();
  // Seeding output k on every row yields row k of each sample's Jacobian.
  double xi = 0.0;
  for (std::size_t k = 0; k < out; ++k) {
    Tensor seed({batch, out});
    for (std::size_t r = 0; r < batch; ++r) seed(r, k) = 1.0;
    const BackwardResult back = Backward(net, fwd.tape, seed, /*want_param_grads=*/false);
    for (std::size_t r = 0; r < batch; ++r) {
      const auto jrow = back.input_grad.row(r);
      if (norm == XiNorm::kMaxAbsEntry) {
        for (double v : jrow) xi = std::max(xi, std::fabs(v));
      } else {
        double s = 0.0;
        for (double v : jrow) s += std::fabs(v);
        xi = std::max(xi, s);
      }
    }
  }
  return xi;
}

double EstimateXi(const Network& f2, const Tensor& x_r, XiNorm norm) {
  return EstimateXi(f2, 0, f2.depth(), x_r, norm);
}

DpForward DpTransform(const Network& front, const Tensor& x_l, const DpConfig& cfg, Rng& rng) {
  cfg.validate(front.depth());
  const std::size_t cut = cfg.cut(front.depth());
  DpForward res;
  auto [masked, mask] = Nullify(x_l.as_matrix(), cfg.eta, rng);
  res.mask = std::move(mask);

  ForwardResult f1 = ForwardRange(front, 0, cut, masked);
  const Tensor& x_r = f1.output;
  res.row_norm.resize(x_r.rows());
  res.row_argmax.resize(x_r.rows());
  for (std::size_t r = 0; r < x_r.rows(); ++r) {
    const auto row = x_r.row(r);
    double d = 0.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (std::fabs(row[j]) > d) {
        d = std::fabs(row[j]);
        arg = j;
      }
    }
    res.row_norm[r] = d;
    res.row_argmax[r] = arg;
  }
  res.clipped = ClipInf(x_r, cfg.bound);

  Tensor noisy = res.clipped;
  if (const double scale = cfg.noise_scale(); scale > 0.0) {
    for (double& v : noisy.data()) v += rng.laplace(scale);
  }
  ForwardResult f2 = ForwardRange(front, cut, front.depth(), noisy);

  const double xi = EstimateXi(front, cut, front.depth(), res.clipped, cfg.xi_norm);
  res.receipt = MakeReceipt(cfg, xi, HashTensor(x_l));
  res.output = std::move(f2.output);
  res.f1_tape = std::move(f1.tape);
  res.f2_tape = std::move(f2.tape);
  if (!res.output.all_finite()) {
    throw Error(Errc::kNonFinite, "non-finite intermediate representation");
  }
  return res;
}

BackwardResult DpBackward(const Network& front, const DpForward& fwd, const DpConfig& cfg,
                          const Tensor& upstream) {
  BackwardResult upper = Backward(front, fwd.f2_tape, upstream);
  Tensor g = std::move(upper.input_grad);
  if (!std::isinf(cfg.bound)) {
    const Tensor& pre = fwd.f1_tape.output;
    const double bound = cfg.bound;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double d = fwd.row_norm[r];
      if (d <= bound) continue;
      // y = x B / d with d = |x_k|:  dx = (B/d) g - e_k sign(x_k) (B/d^2) <g, x>
      auto gr = g.row(r);
      const auto xr = pre.row(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < gr.size(); ++j) dot += gr[j] * xr[j];
      const double s = bound / d;
      for (double& v : gr) v *= s;
      const std::size_t k = fwd.row_argmax[r];
      const double sign = xr[k] < 0.0 ? -1.0 : 1.0;
      gr[k] -= sign * s / d * dot;
    }
  }
  BackwardResult lower = Backward(front, fwd.f1_tape, g);
  Accumulate(lower.param_grads, upper.param_grads);
  return lower;
}

double EmpiricalEpsilon(std::span<const double> a, std::span<const double> b,
                        const HistogramOptions& opts) {
  if (a.empty() || b.empty() || opts.bins == 0) {
    throw Error(Errc::kInsufficientSamples, "empty sample set");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(hi > lo)) return 0.0;  // both distributions are the same point mass
  const double width = (hi - lo) / static_cast<double>(opts.bins);
  std::vector<std::size_t> ca(opts.bins, 0), cb(opts.bins, 0);
  const auto bin_of = [&](double v) {
    auto k = static_cast<std::size_t>((v - lo) / width);
    return std::min(k, opts.bins - 1);
  };
  for (double v : a) ++ca[bin_of(v)];
  for (double v : b) ++cb[bin_of(v)];
  // Unequal sample sizes are normalized to frequencies.
  const double norm = static_cast<double>(b.size()) / static_cast<double>(a.size());
  double eps = 0.0;
  for (std::size_t k = 0; k < opts.bins; ++k) {
    if (ca[k] < opts.min_count || cb[k] < opts.min_count) continue;
    const double ratio = static_cast<double>(ca[k]) * norm / static_cast<double>(cb[k]);
    eps = std::max(eps, std::fabs(std::log(ratio)));
  }
  return eps;
}

namespace {

double CheckedValue(const ScalarFn& f, std::span<const double> x, double bound) {
  const double v = f(x);
  if (!(std::fabs(v) <= bound)) {
    throw Error(Errc::kInvalidArgument, "mechanism output exceeds the declared bound");
  }
  return v;
}

}  // namespace

double VerifyDpScalar(const ScalarFn& f, std::span<const double> x,
                      std::span<const double> x_prime, double bound, double a, double sigma,
                      std::size_t n_samples, Rng& rng, const HistogramOptions& opts) {
  if (n_samples < kMinVerifierSamples) {
    throw Error(Errc::kInsufficientSamples, "need at least 1e5 samples");
  }
  if (!(a > 0.0) || !(sigma > 0.0) || !(bound > 0.0)) {
    throw Error(Errc::kInvalidArgument, "a, sigma and B must be positive");
  }
  const double fx = CheckedValue(f, x, bound);
  const double fy = CheckedValue(f, x_prime, bound);
  const double scale = 2.0 * bound / sigma;
  std::vector<double> sa(n_samples), sb(n_samples);
  for (auto& v : sa) v = fx + a * rng.laplace(scale);
  for (auto& v : sb) v = fy + a * rng.laplace(scale);
  return EmpiricalEpsilon(sa, sb, opts);
}

double VerifyDpNullified(const ScalarFn& f, std::span<const double> x,
                         std::span<const double> x_prime, double bound, double eta,
                         double epsilon, std::size_t n_samples, Rng& rng,
                         const HistogramOptions& opts) {
  if (n_samples < kMinVerifierSamples) {
    throw Error(Errc::kInsufficientSamples, "need at least 1e5 samples");
  }
  if (x.size() != x_prime.size()) throw Error(Errc::kDimensionMismatch, "neighbor size mismatch");
  if (!(eta >= 0.0 && eta <= 1.0) || !(epsilon > 0.0) || !(bound > 0.0)) {
    throw Error(Errc::kInvalidArgument, "invalid eta, epsilon or bound");
  }
  const double scale = 2.0 * bound / epsilon;
  std::vector<double> buf(x.size());
  const auto draw = [&](std::span<const double> input) {
    for (std::size_t i = 0; i < input.size(); ++i) {
      buf[i] = rng.bernoulli(eta) ? 0.0 : input[i];
    }
    return CheckedValue(f, buf, bound) + rng.laplace(scale);
  };
  std::vector<double> sa(n_samples), sb(n_samples);
  for (auto& v : sa) v = draw(x);
  for (auto& v : sb) v = draw(x_prime);
  return EmpiricalEpsilon(sa, sb, opts);
}

}  // namespace cosplit
