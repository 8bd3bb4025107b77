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

#include "cosplit/network.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>

#include "cosplit/error.hpp"
#include "cosplit/io.hpp"

namespace cosplit {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ConstVec = Eigen::Map<const Eigen::RowVectorXd>;
using MutVec = Eigen::Map<Eigen::RowVectorXd>;

ConstMap View(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap View(Tensor& t, std::size_t rows, std::size_t cols) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

std::uint64_t NextUid() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

Tensor AffineForward(const Affine& a, const Tensor& x) {
  const std::size_t batch = x.rows();
  const std::size_t in = a.in_dim();
  const std::size_t out = a.out_dim();
  if (x.cols() != in) {
    throw Error(Errc::kDimensionMismatch, "affine expects width " + std::to_string(in) +
                                              ", got " + std::to_string(x.cols()));
  }
  Tensor y({batch, out});
  auto ym = View(y, batch, out);
  ym.noalias() = View(x, batch, in) * View(a.weight, out, in).transpose();
  ym.rowwise() += ConstVec(a.bias.data().data(), static_cast<Eigen::Index>(out));
  return y;
}

Tensor ReluForward(const Tensor& x) {
  Tensor y = x.as_matrix();
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor SoftmaxForward(const Tensor& x) {
  Tensor y = x.as_matrix();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return y;
}

}  // namespace

Layer Layer::MakeAffine(Tensor weight, Tensor bias, bool trainable) {
  if (weight.rank() != 2) throw Error(Errc::kDimensionMismatch, "affine weight must be rank 2");
  if (bias.size() != weight.rows()) {
    throw Error(Errc::kDimensionMismatch, "affine bias length must equal weight rows");
  }
  return Layer{Affine{std::move(weight), bias.reshaped({bias.size()})}, trainable};
}

Network::Network() : uid_(NextUid()) {}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)), uid_(NextUid()) {
  validate();
}

Network::Network(const Network& other) : layers_(other.layers_), uid_(NextUid()) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    layers_ = other.layers_;
    uid_ = NextUid();
    version_ = 0;
  }
  return *this;
}

void Network::validate() const {
  std::optional<std::size_t> width;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (const auto* a = std::get_if<Affine>(&l.op)) {
      if (a->weight.rank() != 2 || a->bias.size() != a->weight.rows()) {
        throw Error(Errc::kDimensionMismatch, "malformed affine layer " + std::to_string(i));
      }
      if (width && *width != a->in_dim()) {
        throw Error(Errc::kDimensionMismatch,
                    "layer " + std::to_string(i) + " input width " +
                        std::to_string(a->in_dim()) + " != " + std::to_string(*width));
      }
      width = a->out_dim();
    } else if (std::holds_alternative<Softmax>(l.op) && i + 1 != layers_.size()) {
      throw Error(Errc::kInvalidArgument, "softmax may only be the final layer");
    }
  }
}

Layer& Network::mutable_layer(std::size_t i) {
  ++version_;
  return layers_.at(i);
}

void Network::set_trainable(bool trainable) {
  ++version_;
  for (Layer& l : layers_) {
    if (l.is_affine()) l.trainable = trainable;
  }
}

std::optional<std::size_t> Network::input_dim() const {
  for (const Layer& l : layers_) {
    if (l.is_affine()) return l.affine().in_dim();
  }
  return std::nullopt;
}

std::optional<std::size_t> Network::output_dim() const {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (it->is_affine()) return it->affine().out_dim();
  }
  return std::nullopt;
}

Network Network::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > layers_.size()) {
    throw Error(Errc::kIndexOutOfRange, "network slice out of range");
  }
  return Network(std::vector<Layer>(layers_.begin() + static_cast<std::ptrdiff_t>(begin),
                                    layers_.begin() + static_cast<std::ptrdiff_t>(end)));
}

Network Network::Concat(const Network& a, const Network& b) {
  std::vector<Layer> layers(a.layers_);
  layers.insert(layers.end(), b.layers_.begin(), b.layers_.end());
  return Network(std::move(layers));
}

bool Network::operator==(const Network& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& a = layers_[i];
    const Layer& b = other.layers_[i];
    if (a.op.index() != b.op.index() || a.trainable != b.trainable) return false;
    if (a.is_affine() && (!BitwiseEqual(a.affine().weight, b.affine().weight) ||
                          !BitwiseEqual(a.affine().bias, b.affine().bias))) {
      return false;
    }
  }
  return true;
}

ForwardResult ForwardRange(const Network& net, std::size_t begin, std::size_t end,
                           const Tensor& x) {
  if (x.empty()) throw Error(Errc::kDimensionMismatch, "empty input batch");
  if (begin > end || end > net.depth()) throw Error(Errc::kIndexOutOfRange, "bad layer range");
  ForwardResult res;
  res.tape.network_uid = net.uid();
  res.tape.network_version = net.version();
  res.tape.begin = begin;
  res.tape.end = end;
  res.tape.inputs.reserve(end - begin);
  Tensor cur = x.as_matrix();
  for (std::size_t li = begin; li < end; ++li) {
    const Layer& l = net.layers()[li];
    res.tape.inputs.push_back(cur);
    if (const auto* a = std::get_if<Affine>(&l.op)) {
      cur = AffineForward(*a, cur);
    } else if (std::holds_alternative<Relu>(l.op)) {
      cur = ReluForward(cur);
    } else {
      cur = SoftmaxForward(cur);
    }
  }
  res.tape.output = cur;
  res.output = std::move(cur);
  return res;
}

ForwardResult Forward(const Network& net, const Tensor& x) {
  return ForwardRange(net, 0, net.depth(), x);
}

Tensor Predict(const Network& net, const Tensor& x) {
  if (x.empty()) throw Error(Errc::kDimensionMismatch, "empty input batch");
  Tensor cur = x.as_matrix();
  for (const Layer& l : net.layers()) {
    if (const auto* a = std::get_if<Affine>(&l.op)) {
      cur = AffineForward(*a, cur);
    } else if (std::holds_alternative<Relu>(l.op)) {
      cur = ReluForward(cur);
    } else {
      cur = SoftmaxForward(cur);
    }
  }
  return cur;
}

BackwardResult Backward(const Network& net, const GradientTape& tape, const Tensor& upstream,
                        bool want_param_grads) {
  if (tape.network_uid != net.uid() || tape.network_version != net.version() ||
      tape.end > net.depth() || tape.inputs.size() != tape.end - tape.begin) {
    throw Error(Errc::kStaleTape, "tape does not belong to the current parameters");
  }
  Tensor grad = upstream.as_matrix();
  if (grad.shape() != tape.output.shape()) {
    throw Error(Errc::kDimensionMismatch, "upstream gradient " + grad.shape_string() +
                                              " vs output " + tape.output.shape_string());
  }
  BackwardResult res;
  res.param_grads.resize(net.depth());
  const double inv_batch = 1.0 / static_cast<double>(grad.rows());

  for (std::size_t li = tape.end; li-- > tape.begin;) {
    const Layer& l = net.layers()[li];
    const Tensor& x = tape.inputs[li - tape.begin];
    const std::size_t batch = x.rows();
    if (const auto* a = std::get_if<Affine>(&l.op)) {
      const std::size_t in = a->in_dim();
      const std::size_t out = a->out_dim();
      if (l.trainable && want_param_grads) {
        AffineGrad g{Tensor({out, in}), Tensor({out})};
        View(g.weight, out, in).noalias() =
            inv_batch * (View(grad, batch, out).transpose() * View(x, batch, in));
        MutVec(g.bias.data().data(), static_cast<Eigen::Index>(out)) =
            inv_batch * View(grad, batch, out).colwise().sum();
        res.param_grads[li] = std::move(g);
      }
      Tensor dx({batch, in});
      View(dx, batch, in).noalias() = View(grad, batch, out) * View(a->weight, out, in);
      grad = std::move(dx);
    } else if (std::holds_alternative<Relu>(l.op)) {
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(x[i] > 0.0)) grad[i] = 0.0;
      }
    } else {
      // d/dz softmax: s * (g - <g, s>)
      const Tensor& s = tape.output;
      for (std::size_t r = 0; r < batch; ++r) {
        auto gr = grad.row(r);
        const auto sr = s.row(r);
        double dot = 0.0;
        for (std::size_t i = 0; i < gr.size(); ++i) dot += gr[i] * sr[i];
        for (std::size_t i = 0; i < gr.size(); ++i) gr[i] = sr[i] * (gr[i] - dot);
      }
    }
  }
  res.input_grad = std::move(grad);
  return res;
}

void SgdStep(Network& net, const ParamGrads& grads, double learning_rate) {
  if (grads.size() != net.depth()) {
    throw Error(Errc::kDimensionMismatch, "gradient list does not match network depth");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i] || !net.layers()[i].trainable || !net.layers()[i].is_affine()) continue;
    auto& a = std::get<Affine>(net.mutable_layer(i).op);
    const AffineGrad& g = *grads[i];
    if (g.weight.shape() != a.weight.shape() || g.bias.size() != a.bias.size()) {
      throw Error(Errc::kDimensionMismatch, "gradient shape mismatch at layer " + std::to_string(i));
    }
    for (std::size_t k = 0; k < a.weight.size(); ++k) a.weight[k] -= learning_rate * g.weight[k];
    for (std::size_t k = 0; k < a.bias.size(); ++k) a.bias[k] -= learning_rate * g.bias[k];
  }
}

void Accumulate(ParamGrads& a, const ParamGrads& b, double scale) {
  if (a.size() != b.size()) throw Error(Errc::kDimensionMismatch, "gradient list length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!b[i]) continue;
    if (!a[i]) {
      a[i] = AffineGrad{Tensor(b[i]->weight.shape()), Tensor(b[i]->bias.shape())};
    }
    for (std::size_t k = 0; k < a[i]->weight.size(); ++k) a[i]->weight[k] += scale * b[i]->weight[k];
    for (std::size_t k = 0; k < a[i]->bias.size(); ++k) a[i]->bias[k] += scale * b[i]->bias[k];
  }
}

Network MakeMlp(std::span<const std::size_t> widths, bool softmax_head, Rng& rng,
                bool relu_after_last) {
  if (widths.size() < 2) throw Error(Errc::kInvalidArgument, "need at least input and output width");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i];
    const std::size_t out = widths[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w({out, in});
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    layers.push_back(Layer::MakeAffine(std::move(w), Tensor({out})));
    if (i + 2 < widths.size() || relu_after_last) layers.push_back(Layer::MakeRelu());
  }
  if (softmax_head) layers.push_back(Layer::MakeSoftmax());
  return Network(std::move(layers));
}

std::vector<std::uint8_t> EncodeCheckpoint(const Network& net) {
  if (net.depth() > 0xffff) throw Error(Errc::kTooLarge, "too many layers for checkpoint");
  ByteWriter w;
  w.text("RLTM");
  w.u8(0x01);
  w.u16(static_cast<std::uint16_t>(net.depth()));
  for (const Layer& l : net.layers()) {
    w.u8(static_cast<std::uint8_t>(l.op.index()));
    w.u8(l.trainable ? 1 : 0);
    if (l.is_affine()) {
      const Affine& a = l.affine();
      w.u32(static_cast<std::uint32_t>(a.out_dim()));
      w.u32(static_cast<std::uint32_t>(a.in_dim()));
      for (double v : a.weight.data()) w.f64(v);
      for (double v : a.bias.data()) w.f64(v);
    }
  }
  return w.take();
}

Network DecodeCheckpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "RLTM") {
    throw Error(Errc::kBadMagic, "not a model checkpoint");
  }
  if (const auto version = r.u8(); version != 0x01) {
    throw Error(Errc::kParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint16_t count = r.u16();
  std::vector<Layer> layers;
  layers.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::uint8_t kind = r.u8();
    const bool trainable = r.u8() != 0;
    switch (kind) {
      case 0: {
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        if (rows == 0 || cols == 0) throw Error(Errc::kParseError, "empty affine layer");
        const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
        if (n + rows > r.remaining() / 8) throw Error(Errc::kTruncated, "affine layer body");
        std::vector<double> w(n), b(rows);
        for (double& v : w) v = r.f64();
        for (double& v : b) v = r.f64();
        layers.push_back(Layer::MakeAffine(Tensor({rows, cols}, std::move(w)),
                                           Tensor({rows}, std::move(b)), trainable));
        break;
      }
      case 1:
        layers.push_back(Layer{Relu{}, trainable});
        break;
      case 2:
        layers.push_back(Layer{Softmax{}, trainable});
        break;
      default:
        throw Error(Errc::kParseError, "unknown layer kind " + std::to_string(kind));
    }
  }
  if (!r.done()) throw Error(Errc::kParseError, "trailing bytes after checkpoint");
  return Network(std::move(layers));
}

void WriteCheckpoint(const Network& net, std::ostream& out) {
  const auto bytes = EncodeCheckpoint(net);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Network ReadCheckpoint(std::istream& in) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return DecodeCheckpoint(bytes);
}

void SaveCheckpoint(const Network& net, const std::string& path) {
  WriteFileAtomic(path, EncodeCheckpoint(net));
}

Network LoadCheckpoint(const std::string& path) { return DecodeCheckpoint(ReadFileBytes(path)); }

std::string CheckpointHash(const Network& net) { return HexDigest(Fnv1a(EncodeCheckpoint(net))); }

}  // namespace cosplit
