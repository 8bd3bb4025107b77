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


#include <sstream>

#include "doctest.h"

#include "cosplit/error.hpp"
#include "cosplit/network.hpp"
#include "support.hpp"

using namespace cosplit;
using cosplit::testing::RandomNet;
using cosplit::testing::RandomTensor;

namespace {

Network Single(Layer l) { return Network({std::move(l)}); }

Tensor Eye(std::size_t n) {
  Tensor t = Tensor::Zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("tensor shape and data must agree") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), Error);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t(1, 2) == 6);
  CHECK(t.slice_rows(1, 2).values() == std::vector<double>{4, 5, 6});
  CHECK(MaxAbsDiff(t, t) == 0.0);
}

TEST_CASE("forward: identity affine, relu, softmax") {
  auto id = Single(Layer::MakeAffine(Eye(2), Tensor::Vector({0, 0})));
  Tensor y = Predict(id, Tensor::FromRows({{3, -1}}));
  CHECK(y(0, 0) == 3.0);
  CHECK(y(0, 1) == -1.0);

  y = Predict(Single(Layer::MakeRelu()), Tensor::FromRows({{-2, 0, 5}}));
  CHECK(y.values() == std::vector<double>{0, 0, 5});

  y = Predict(Single(Layer::MakeSoftmax()), Tensor::FromRows({{0, 0, 0}}));
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("forward rejects a width mismatch") {
  auto id = Single(Layer::MakeAffine(Eye(2), Tensor::Vector({0, 0})));
  try {
    Forward(id, Tensor::FromRows({{1, 2, 3}}));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kDimensionMismatch);
  }
}

TEST_CASE("softmax must be the last layer") {
  std::vector<Layer> ls = {Layer::MakeSoftmax(), Layer::MakeRelu()};
  CHECK_THROWS_AS(Network{ls}, Error);
}

TEST_CASE("backward: least squares closed form") {
  // L = 0.5 ||W x - t||^2 with t = 0 gives dW = (W x) x^T = x x^T for W = I.
  auto net = Single(Layer::MakeAffine(Eye(2), Tensor::Vector({0, 0})));
  Tensor x = Tensor::FromRows({{1, 2}});
  auto fr = Forward(net, x);
  auto br = Backward(net, fr.tape, fr.output);  // dl/dy = y - t
  const Tensor& dw = br.param_grads[0]->weight;
  CHECK(dw(0, 0) == 1.0);
  CHECK(dw(0, 1) == 2.0);
  CHECK(dw(1, 0) == 2.0);
  CHECK(dw(1, 1) == 4.0);
}

TEST_CASE("backward: softmax + cross-entropy is softmax - onehot") {
  Rng rng(3);
  auto sm = Single(Layer::MakeSoftmax());
  for (int rep = 0; rep < 20; ++rep) {
    Tensor u = RandomTensor(1, 5, -3, 3, rng);
    const std::size_t c = rng.below(5);
    auto fr = Forward(sm, u);
    Tensor up = Tensor::Zeros(1, 5);
    up(0, c) = -1.0 / fr.output(0, c);
    auto br = Backward(sm, fr.tape, up);
    for (std::size_t j = 0; j < 5; ++j) {
      const double expect = fr.output(0, j) - (j == c ? 1.0 : 0.0);
      CHECK(br.input_grad(0, j) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward: finite differences on random 3-layer nets") {
  Rng rng(11);
  int done = 0;
  while (done < 10) {
    std::vector<std::size_t> w = {2 + rng.below(8), 2 + rng.below(8), 2 + rng.below(8),
                                  2 + rng.below(8)};
    Network net = MakeMlp(w, rng.bernoulli(0.5), rng);
    Tensor x = RandomTensor(4, w[0], -1, 1, rng);
    if (cosplit::testing::ReluMargin(net, x) < 1e-3) continue;
    Tensor c = RandomTensor(4, w.back(), -1, 1, rng);
    auto res = cosplit::testing::CheckGradients(net, x, c);
    CHECK(res.max_rel < 1e-4);
    ++done;
  }
}

TEST_CASE("backward rejects a stale tape") {
  Rng rng(5);
  std::size_t w[] = {3, 4, 2};
  Network net = MakeMlp(w, false, rng);
  auto fr = Forward(net, RandomTensor(2, 3, 0, 1, rng));
  std::get<Affine>(net.mutable_layer(0).op).weight[0] += 1.0;
  try {
    Backward(net, fr.tape, Tensor::Zeros(2, 2));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kStaleTape);
  }
  // A tape from a different network instance is also refused.
  Network other = net;
  auto fr2 = Forward(net, RandomTensor(2, 3, 0, 1, rng));
  CHECK_THROWS_AS(Backward(other, fr2.tape, Tensor::Zeros(2, 2)), Error);
}

TEST_CASE("sgd: zero rate, direct update, frozen layers") {
  auto net = Single(Layer::MakeAffine(Tensor({1, 1}, {2.0}), Tensor::Vector({0.0})));
  ParamGrads g(1);
  g[0] = AffineGrad{Tensor({1, 1}, {1.0}), Tensor::Vector({0.0})};
  Network same = net;
  SgdStep(same, g, 0.0);
  CHECK(same == net);
  SgdStep(net, g, 0.5);
  CHECK(net.layers()[0].affine().weight[0] == 1.5);

  net.set_trainable(false);
  Network frozen = net;
  for (int i = 0; i < 100; ++i) SgdStep(net, g, 0.5);
  CHECK(net == frozen);
}

TEST_CASE("property: determinism and composition") {
  Rng rng(21);
  for (int rep = 0; rep < 25; ++rep) {
    Network net = RandomNet(rng);
    Tensor x = RandomTensor(5, *net.input_dim(), -1, 1, rng);
    CHECK(BitwiseEqual(Predict(net, x), Predict(net, x)));
    for (std::size_t cut = 0; cut <= net.depth(); ++cut) {
      Tensor mid = Predict(net.slice(0, cut), x);
      Tensor y = Predict(net.slice(cut, net.depth()), mid);
      CHECK(BitwiseEqual(y, Predict(net, x)));
    }
  }
}

TEST_CASE("property: softmax rows sum to one and are positive") {
  Rng rng(8);
  auto sm = Single(Layer::MakeSoftmax());
  for (int rep = 0; rep < 50; ++rep) {
    Tensor y = Predict(sm, RandomTensor(3, 7, -40, 40, rng));
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0;
      for (double v : y.row(r)) {
        CHECK(v > 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("init: weights within the uniform bound") {
  Rng rng(2);
  std::size_t w[] = {10, 6, 4};
  Network net = MakeMlp(w, true, rng);
  const auto& a = net.layers()[0].affine();
  const double lim = std::sqrt(6.0 / 16.0);
  for (double v : a.weight.values()) CHECK(std::abs(v) <= lim);
  for (double v : a.bias.values()) CHECK(v == 0.0);
}

TEST_CASE("checkpoint round trip and layout") {
  Rng rng(4);
  Network net = RandomNet(rng);
  net.mutable_layer(0).trainable = false;
  auto bytes = EncodeCheckpoint(net);
  REQUIRE(bytes.size() > 7);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RLTM");
  CHECK(bytes[4] == 0x01);
  CHECK(bytes[5] == static_cast<std::uint8_t>(net.depth()));
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);  // kind Affine
  CHECK(bytes[8] == 0);  // not trainable
  Network back = DecodeCheckpoint(bytes);
  CHECK(back == net);
  CHECK(!back.layers()[0].trainable);
  CHECK(CheckpointHash(back) == CheckpointHash(net));

  std::stringstream ss;
  WriteCheckpoint(net, ss);
  CHECK(ReadCheckpoint(ss) == net);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(DecodeCheckpoint(bad), Error);
  bytes.pop_back();
  CHECK_THROWS_AS(DecodeCheckpoint(bytes), Error);
}
