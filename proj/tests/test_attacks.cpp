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


#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"

#include "cosplit/attacks.hpp"
#include "cosplit/datasets.hpp"
#include "cosplit/error.hpp"
#include "cosplit/keygen.hpp"
#include "support.hpp"

using namespace cosplit;
using cosplit::testing::RandomTensor;

namespace {

// Independent SSIM: long double, one-pass moments.
double ReferenceSsim(const Tensor& a, const Tensor& b) {
  const long double c1 = 1e-4L, c2 = 9e-4L, n = 64.0L;
  long double total = 0;
  std::size_t count = 0;
  for (std::size_t r0 = 0; r0 + 8 <= a.rows(); ++r0) {
    for (std::size_t c0 = 0; c0 + 8 <= a.cols(); ++c0) {
      long double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t r = r0; r < r0 + 8; ++r) {
        for (std::size_t c = c0; c < c0 + 8; ++c) {
          const long double x = a(r, c), y = b(r, c);
          sa += x;
          sb += y;
          saa += x * x;
          sbb += y * y;
          sab += x * y;
        }
      }
      const long double ma = sa / n, mb = sb / n;
      const long double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cv = sab / n - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return static_cast<double>(total / count);
}

Network LinearNet(const Tensor& w) {
  return Network({Layer::MakeAffine(w, Tensor(std::vector<std::size_t>{w.rows()}))});
}

}  // namespace

TEST_CASE("inversion of the identity recovers the input") {
  Rng rng(1);
  Tensor w = Tensor::Zeros(6, 6);
  for (std::size_t i = 0; i < 6; ++i) w(i, i) = 1.0;
  Tensor x0 = RandomTensor(3, 6, 0, 1, rng);
  InversionConfig cfg;
  cfg.steps = 500;
  auto res = Invert(LinearNet(w), x0, cfg);
  CHECK(Mse(res.x, x0) < 1e-10);
}

TEST_CASE("property: inversion of a linear map reaches the closed-form solve") {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 3 + rng.below(4);
    Tensor w = RandomTensor(n, n, -0.25, 0.25, rng);
    for (std::size_t i = 0; i < n; ++i) w(i, i) += 1.0;
    Tensor z = RandomTensor(2, n, -1, 1, rng);
    InversionConfig cfg;
    cfg.steps = 3000;
    cfg.step_size = 0.3;
    auto res = Invert(LinearNet(w), z, cfg);

    Eigen::MatrixXd W(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) W(i, j) = w(i, j);
    Tensor exact = Tensor::Zeros(2, n);
    for (std::size_t r = 0; r < 2; ++r) {
      Eigen::VectorXd zr(n);
      for (std::size_t j = 0; j < n; ++j) zr(j) = z(r, j);
      Eigen::VectorXd xr = W.partialPivLu().solve(zr);
      for (std::size_t j = 0; j < n; ++j) exact(r, j) = xr(j);
    }
    CHECK(Mse(res.x, exact) < 1e-6);
  }
}

TEST_CASE("inversion objective never increases") {
  Rng rng(3);
  std::size_t w[] = {8, 12, 6};
  Network net = MakeMlp(w, false, rng);
  Tensor z = Predict(net, RandomTensor(1, 8, 0, 1, rng));
  std::vector<double> trace;
  InversionConfig cfg;
  cfg.steps = 100;
  cfg.step_size = 1.0;
  Invert(net, z, cfg, &trace);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
}

TEST_CASE("mse and ssim examples") {
  Tensor a = Tensor::Zeros(8, 8), b = Tensor::Zeros(8, 8);
  for (double& v : b.values()) v = 1.0;
  CHECK(Mse(a, a) == 0.0);
  CHECK(Mse(a, b) == 1.0);
  Rng rng(4);
  Tensor x = RandomTensor(10, 12, 0, 1, rng);
  CHECK(Ssim(x, x) == 1.0);
  CHECK_THROWS_AS(Ssim(RandomTensor(7, 8, 0, 1, rng), RandomTensor(7, 8, 0, 1, rng)), Error);
}

TEST_CASE("property: ssim matches a reference and is symmetric") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t r = 8 + rng.below(6), c = 8 + rng.below(6);
    Tensor a = RandomTensor(r, c, 0, 1, rng);
    Tensor b = a;
    for (double& v : b.values()) v = std::clamp(v + rng.uniform(-0.3, 0.3), 0.0, 1.0);
    const double s = Ssim(a, b);
    CHECK(std::abs(s - ReferenceSsim(a, b)) <= 1e-6);
    CHECK(std::abs(s - Ssim(b, a)) <= 1e-12);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);

    long double ref_mse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const long double d = static_cast<long double>(a[i]) - b[i];
      ref_mse += d * d;
    }
    CHECK(std::abs(Mse(a, b) - static_cast<double>(ref_mse / a.size())) <= 1e-9);
  }
}

TEST_CASE("paired t-test") {
  const double a[] = {1, 2, 3, 4, 5};
  const double b[] = {0, 0, 0, 0, 0};
  auto t = PairedTTestGreater(a, b);
  CHECK(t.mean_diff == 3.0);
  CHECK(t.t == doctest::Approx(4.242640687119285).epsilon(1e-12));
  CHECK(t.p_value == doctest::Approx(0.0066177997818413475).epsilon(1e-9));
  auto rev = PairedTTestGreater(b, a);
  CHECK(rev.p_value > 0.99);
}

TEST_CASE("inversion report") {
  InversionRow rows[] = {{0, 0.5, 0.25}, {1, 1.5, std::nullopt}};
  const std::string s = FormatInversionReport(rows);
  CHECK(s.find("mean_mse=1") != std::string::npos);
}

TEST_CASE("attack accuracy examples") {
  std::uint32_t always[] = {2, 2, 2, 2};
  CHECK(AttackAccuracy(always, 2) == 1.0);
  std::uint32_t outs[] = {1, 0, 1};
  CHECK(AttackAccuracy(outs, 1) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("property: coin-flip attacker is at chance") {
  Rng rng(6);
  std::vector<std::uint32_t> p(10000);
  for (auto& v : p) v = static_cast<std::uint32_t>(rng.below(2));
  const double l = AttackAccuracy(p, 1);
  CHECK(l >= 0.0);
  CHECK(l <= 1.0);
  CHECK(std::abs(l - 0.5) <= 0.02);
}

TEST_CASE("shadow training rejects large key spaces") {
  std::size_t w[] = {4, 6, 6, 6, 5};
  Rng rng(7);
  Network full = MakeMlp(w, true, rng);
  LabeledSet data = GenBlobs(5, 4, 4, 0.1, 7);
  ShadowConfig sc;
  try {
    TrainShadows(full.slice(0, 3), full.slice(3, full.depth()), data, sc);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kKeySpaceTooLarge);
  }
}

TEST_CASE("shadow ensemble covers every derangement") {
  std::size_t w[] = {4, 6, 6, 6, 3};
  Rng rng(8);
  Network full = MakeMlp(w, true, rng);
  LabeledSet data = GenBlobs(3, 10, 4, 0.1, 8);
  ShadowConfig sc;
  sc.train.epochs = 1;
  sc.gamma_epochs = 1;
  ShadowEnsemble ens = TrainShadows(full.slice(0, 3), full.slice(3, full.depth()), data, sc);
  REQUIRE(ens.mappings.size() == 2);
  CHECK(ens.shadows.size() == 2);
  for (std::uint32_t j = 0; j < 2; ++j) CHECK(MappingIndex(ens, ens.mappings[j]) == j);
  auto pred = ClassifyMapping(ens, Predict(full.slice(0, 3), data.inputs));
  CHECK(pred.size() == data.size());
  for (auto p : pred) CHECK(p < 2);
}
