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

#ifndef COSPLIT_NETWORK_HPP_
#define COSPLIT_NETWORK_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cosplit/rng.hpp"
#include "cosplit/tensor.hpp"

namespace cosplit {

struct Affine {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};
struct Relu {};
struct Softmax {};

struct Layer {
  std::variant<Affine, Relu, Softmax> op;
  bool trainable = true;

  static Layer MakeAffine(Tensor weight, Tensor bias, bool trainable = true);
  static Layer MakeRelu() { return Layer{Relu{}, false}; }
  static Layer MakeSoftmax() { return Layer{Softmax{}, false}; }

  bool is_affine() const { return std::holds_alternative<Affine>(op); }
  const Affine& affine() const { return std::get<Affine>(op); }
};

// Ordered layer stack. Every instance carries an identity and a parameter
// version; tapes record both so a stale or foreign tape is rejected.
class Network {
 public:
  Network();
  explicit Network(std::vector<Layer> layers);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  std::span<const Layer> layers() const { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  // Mutable access invalidates outstanding tapes.
  Layer& mutable_layer(std::size_t i);
  void set_trainable(bool trainable);

  std::uint64_t uid() const { return uid_; }
  std::uint64_t version() const { return version_; }

  // Width of the first / last affine layer, or nullopt for a purely
  // element-wise stack.
  std::optional<std::size_t> input_dim() const;
  std::optional<std::size_t> output_dim() const;

  Network slice(std::size_t begin, std::size_t end) const;
  static Network Concat(const Network& a, const Network& b);

  bool operator==(const Network& other) const;  // bitwise parameter equality

 private:
  void validate() const;

  std::vector<Layer> layers_;
  std::uint64_t uid_;
  std::uint64_t version_ = 0;
};

struct GradientTape {
  std::uint64_t network_uid = 0;
  std::uint64_t network_version = 0;
  std::size_t begin = 0;       // layer range [begin, end) that produced the tape
  std::size_t end = 0;
  std::vector<Tensor> inputs;  // input to each layer in the range
  Tensor output;               // final output (softmax backward needs it)
};

struct ForwardResult {
  Tensor output;
  GradientTape tape;
};

struct AffineGrad {
  Tensor weight;
  Tensor bias;
};
// One entry per layer; present only for trainable affine layers.
using ParamGrads = std::vector<std::optional<AffineGrad>>;

struct BackwardResult {
  ParamGrads param_grads;
  Tensor input_grad;
};

// Applies the stack row-wise. x is [batch x in] (rank 1 is a batch of one).
ForwardResult Forward(const Network& net, const Tensor& x);
// Runs layers [begin, end) only; an empty range is the identity.
ForwardResult ForwardRange(const Network& net, std::size_t begin, std::size_t end,
                           const Tensor& x);
Tensor Predict(const Network& net, const Tensor& x);

// upstream holds per-sample dl_i/dy_i for a loss L = mean_i l_i. Parameter
// gradients are averaged over the batch (dL/dtheta); the input gradient is
// per sample (dl_i/dx_i). param_grads always has net.depth() entries.
BackwardResult Backward(const Network& net, const GradientTape& tape, const Tensor& upstream,
                        bool want_param_grads = true);

// theta <- theta - lr * g for every trainable affine layer with a gradient.
void SgdStep(Network& net, const ParamGrads& grads, double learning_rate);

// Adds b into a (matching layouts); used to merge gradient contributions.
void Accumulate(ParamGrads& a, const ParamGrads& b, double scale = 1.0);

// Affine/ReLU stack with uniform +-sqrt(6/(fan_in+fan_out)) weights and zero
// biases. widths = {in, h1, ..., out}; ReLU between affines, optional softmax.
Network MakeMlp(std::span<const std::size_t> widths, bool softmax_head, Rng& rng,
                bool relu_after_last = false);

// Checkpoint: "RLTM", 0x01, u16 layer count, then per layer kind/trainable
// bytes and, for affine, u32 rows, u32 cols, W then b as f64 LE.
void WriteCheckpoint(const Network& net, std::ostream& out);
Network ReadCheckpoint(std::istream& in);
std::vector<std::uint8_t> EncodeCheckpoint(const Network& net);
Network DecodeCheckpoint(std::span<const std::uint8_t> bytes);
void SaveCheckpoint(const Network& net, const std::string& path);
Network LoadCheckpoint(const std::string& path);
std::string CheckpointHash(const Network& net);

}  // namespace cosplit

#endif  // COSPLIT_NETWORK_HPP_
