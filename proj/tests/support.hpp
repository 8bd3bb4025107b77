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


// Helpers shared by the unit tests and the acceptance runner.

#ifndef COSPLIT_TESTS_SUPPORT_HPP_
#define COSPLIT_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "cosplit/network.hpp"
#include "cosplit/rng.hpp"
#include "cosplit/tensor.hpp"
#include "cosplit/wire.hpp"

namespace cosplit::testing {

inline Tensor RandomTensor(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  Tensor t = Tensor::Zeros(rows, cols);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// 1..max_affine affine layers with ReLU between them, widths in [2, max_units],
// random biases, and a softmax head on about half the draws.
inline Network RandomNet(Rng& rng, std::size_t max_affine = 4, std::size_t max_units = 32,
                         bool allow_softmax = true) {
  const std::size_t n_affine = 1 + rng.below(max_affine);
  std::vector<std::size_t> widths(n_affine + 1);
  for (auto& w : widths) w = 2 + rng.below(max_units - 1);
  const bool softmax = allow_softmax && rng.bernoulli(0.5);
  Network net = MakeMlp(widths, softmax, rng);
  for (std::size_t i = 0; i < net.depth(); ++i) {
    if (!net.layers()[i].is_affine()) continue;
    auto& a = std::get<Affine>(net.mutable_layer(i).op);
    for (double& b : a.bias.values()) b = rng.uniform(-0.5, 0.5);
  }
  return net;
}

// Smallest |pre-activation| seen by any ReLU on this batch. Central
// differences straddling a kink are meaningless, so callers resample when
// this is tiny.
inline double ReluMargin(const Network& net, const Tensor& x) {
  const ForwardResult fr = Forward(net, x);
  double margin = INFINITY;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    if (!std::holds_alternative<Relu>(net.layers()[i].op)) continue;
    for (double v : fr.tape.inputs[i].values()) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

// L = mean_i sum_j c_ij y_ij, so dl_i/dy_i = c_i.
inline double LinearLoss(const Network& net, const Tensor& x, const Tensor& c) {
  const Tensor y = Predict(net, x);
  long double s = 0.0L;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<long double>(c[i]) * y[i];
  return static_cast<double>(s / static_cast<long double>(y.rows()));
}

inline double RelErr(double a, double b) {
  const double den = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / den;
}

struct GradCheckResult {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Every parameter gradient and every input gradient against central
// differences with step h.
inline GradCheckResult CheckGradients(const Network& net_in, const Tensor& x, const Tensor& c,
                                      double h = 1e-5) {
  Network net = net_in;
  net.set_trainable(true);
  const ForwardResult fr = Forward(net, x);
  const BackwardResult br = Backward(net, fr.tape, c);
  GradCheckResult out;
  for (std::size_t li = 0; li < net.depth(); ++li) {
    if (!net.layers()[li].is_affine()) continue;
    const AffineGrad& g = *br.param_grads[li];
    for (int which = 0; which < 2; ++which) {
      const std::size_t n =
          which == 0 ? net.layers()[li].affine().weight.size() : net.layers()[li].affine().bias.size();
      for (std::size_t k = 0; k < n; ++k) {
        auto param = [&]() -> double& {
          auto& a = std::get<Affine>(net.mutable_layer(li).op);
          return which == 0 ? a.weight[k] : a.bias[k];
        };
        const double orig = param();
        param() = orig + h;
        const double up = LinearLoss(net, x, c);
        param() = orig - h;
        const double dn = LinearLoss(net, x, c);
        param() = orig;
        const double fd = (up - dn) / (2 * h);
        const double an = which == 0 ? g.weight[k] : g.bias[k];
        out.max_rel = std::max(out.max_rel, RelErr(an, fd));
        ++out.checked;
      }
    }
  }
  // Input gradient is per sample: dl_i/dx_i = batch * dL/dx_i.
  const double batch = static_cast<double>(x.rows());
  Tensor xp = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = xp[k];
    xp[k] = orig + h;
    const double up = LinearLoss(net, xp, c);
    xp[k] = orig - h;
    const double dn = LinearLoss(net, xp, c);
    xp[k] = orig;
    const double fd = batch * (up - dn) / (2 * h);
    out.max_rel = std::max(out.max_rel, RelErr(br.input_grad[k], fd));
    ++out.checked;
  }
  return out;
}

// Upper-tail p-value of Pearson's statistic against equal expected counts.
inline double ChiSquareUniformP(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}


// Transport that replays a fixed byte string, then reports end of stream,
// and records everything written to it. Lets a session run synchronously.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<std::uint8_t> input) : input_(std::move(input)) {}
  void write_all(std::span<const std::uint8_t> bytes) override {
    output_.insert(output_.end(), bytes.begin(), bytes.end());
  }
  std::size_t read_some(std::span<std::uint8_t> buf) override {
    // Short reads exercise frame reassembly.
    const std::size_t n = std::min({buf.size(), input_.size() - pos_, chunk_});
    std::copy_n(input_.begin() + static_cast<std::ptrdiff_t>(pos_), n, buf.begin());
    pos_ += n;
    chunk_ = chunk_ % 7 + 1;
    return n;
  }
  void close() override {}
  const std::vector<std::uint8_t>& output() const { return output_; }

 private:
  std::vector<std::uint8_t> input_;
  std::vector<std::uint8_t> output_;
  std::size_t pos_ = 0;
  std::size_t chunk_ = 3;
};

// Bytes of a well-formed device session: HELLO, FORWARD, LOSS, INFER.
inline std::vector<std::uint8_t> ValidSessionBytes(std::size_t ir_width, std::size_t n_classes,
                                                   std::size_t batch, Rng& rng) {
  std::vector<std::uint8_t> out;
  auto add = [&](MsgType t, const std::vector<std::uint8_t>& body) {
    auto f = EncodeFrame(t, body);
    out.insert(out.end(), f.begin(), f.end());
  };
  add(MsgType::kHello, EncodeHello({static_cast<std::uint32_t>(ir_width),
                                    static_cast<std::uint32_t>(n_classes), 64}));
  add(MsgType::kForward, EncodeTensorPayload(RandomTensor(batch, ir_width, -1, 1, rng)));
  add(MsgType::kLoss, EncodeLoss({0.5, RandomTensor(batch, n_classes, -1, 1, rng)}));
  add(MsgType::kInfer, EncodeTensorPayload(RandomTensor(batch, ir_width, -1, 1, rng)));
  return out;
}

// Random prefix of a valid stream, optionally corrupted, or pure noise.
inline std::vector<std::uint8_t> FuzzBytes(std::size_t ir_width, std::size_t n_classes, Rng& rng) {
  std::vector<std::uint8_t> b;
  const std::uint64_t kind = rng.below(10);
  if (kind == 0) {
    b.resize(rng.below(64));
    for (auto& v : b) v = static_cast<std::uint8_t>(rng.below(256));
    return b;
  }
  b = ValidSessionBytes(ir_width, n_classes, 1 + rng.below(4), rng);
  b.resize(rng.below(b.size() + 1));
  if (kind <= 5) {
    const std::size_t flips = 1 + rng.below(4);
    for (std::size_t i = 0; i < flips && !b.empty(); ++i) {
      b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.below(256));
    }
  }
  return b;
}

// True if every frame the edge wrote is a legal edge reply.
inline bool RepliesWellFormed(const std::vector<std::uint8_t>& out) {
  std::size_t parsed = 0;
  const auto frames = SplitFrames(out);
  for (const Frame& f : frames) {
    parsed += kFrameHeaderSize + f.payload.size();
    switch (f.type) {
      case MsgType::kHello:
      case MsgType::kLogits:
      case MsgType::kGrad:
      case MsgType::kPrediction:
      case MsgType::kError:
        break;
      default:
        return false;
    }
  }
  return parsed == out.size();
}

}  // namespace cosplit::testing

#endif  // COSPLIT_TESTS_SUPPORT_HPP_
