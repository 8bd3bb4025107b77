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

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "doctest.h"

#include "cosplit/dp.hpp"
#include "cosplit/error.hpp"
#include "support.hpp"

using namespace cosplit;
using cosplit::testing::RandomTensor;

namespace {

Network Gain(std::size_t n, double c) {
  Tensor w = Tensor::Zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) w(i, i) = c;
  return Network({Layer::MakeAffine(w, Tensor(std::vector<std::size_t>{n}))});
}

double HighPrecisionBudget(double eps, double eta, double xi) {
  using boost::multiprecision::cpp_dec_float_50;
  cpp_dec_float_50 e(eps), h(eta), x(xi);
  cpp_dec_float_50 v = log((1 - h) * exp(e / x) + h);
  return v.convert_to<double>();
}

}  // namespace

TEST_CASE("laplace moments") {
  Rng rng(1);
  Tensor s = SampleLaplace(1.0, {1000000}, rng);
  double mean = 0, m2 = 0;
  std::size_t inside = 0;
  for (double v : s.values()) {
    mean += v;
    inside += std::abs(v) <= std::log(2.0);
  }
  mean /= s.size();
  for (double v : s.values()) m2 += (v - mean) * (v - mean);
  const double var = m2 / (s.size() - 1);
  CHECK(var >= 1.96);
  CHECK(var <= 2.04);
  std::vector<double> sorted = s.values();
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  CHECK(std::abs(sorted[sorted.size() / 2]) <= 0.01);
  CHECK(std::abs(static_cast<double>(inside) / s.size() - 0.5) <= 0.005);
  try {
    SampleLaplace(0.0, {3}, rng);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kInvalidScale);
  }
}

TEST_CASE("nullify") {
  Rng rng(2);
  Tensor x = RandomTensor(100, 1000, 0.1, 1.0, rng);
  CHECK(BitwiseEqual(Nullify(x, 0.0, rng).first, x));
  auto [all, m1] = Nullify(x, 1.0, rng);
  CHECK(all.max_abs() == 0.0);
  CHECK(m1.zero_count == x.size());
  auto [some, m] = Nullify(x, 0.3, rng);
  std::size_t zeros = 0;
  for (double v : some.values()) zeros += v == 0.0;
  CHECK(zeros == m.zero_count);
  CHECK(std::abs(static_cast<double>(zeros) - 30000.0) <= 450.0);
}

TEST_CASE("clip_inf") {
  Tensor x = Tensor::FromRows({{3, -6}});
  Tensor y = ClipInf(x, 2.0);
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == -2.0);
  Tensor half = Tensor::FromRows({{0.5, -1.0}});
  CHECK(BitwiseEqual(ClipInf(half, 2.0), half));
  Tensor z = Tensor::Zeros(2, 3);
  CHECK(BitwiseEqual(ClipInf(z, 1.0), z));
}

TEST_CASE("property: clipped rows never exceed the bound") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double b = rng.uniform(0.01, 5.0);
    Tensor x = RandomTensor(1 + rng.below(4), 1 + rng.below(16), -20, 20, rng);
    CHECK(ClipInf(x, b).max_abs() <= b);
  }
}

TEST_CASE("budget endpoints and values") {
  CHECK(PrivacyBudget(2.0, 0.0, 1.0) == 2.0);
  CHECK(PrivacyBudget(3.0, 1.0, 0.7) == 0.0);
  CHECK(PrivacyBudget(1.0, 0.1, 1.0) == doctest::Approx(0.9347016640011664).epsilon(1e-14));
  try {
    PrivacyBudget(1.0, 0.0, 0.0);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kDegenerateXi);
  }
}

TEST_CASE("property: budget monotonicity and precision") {
  for (double eps : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    for (double eta : {0.0, 0.2, 0.5, 0.8, 1.0}) {
      for (double xi : {0.25, 1.0, 3.0}) {
        const double v = PrivacyBudget(eps, eta, xi);
        CHECK(std::abs(v - HighPrecisionBudget(eps, eta, xi)) <= 1e-12);
        CHECK(v <= eps / xi + 1e-15);
        CHECK(PrivacyBudget(eps * 1.1, eta, xi) >= v);
        CHECK(PrivacyBudget(eps, std::min(1.0, eta + 0.1), xi) <= v);
        CHECK(PrivacyBudget(eps, eta, xi * 1.1) <= v);
      }
    }
    CHECK(PrivacyBudget(eps, 0.0, 2.0) == eps / 2.0);
  }
}

TEST_CASE("receipt text round trip") {
  DpConfig cfg;
  cfg.bound = 0.5;
  cfg.epsilon = 2.0;
  cfg.eta = 0.1;
  PrivacyReceipt r = MakeReceipt(cfg, 1.25, 0xdeadbeefULL);
  CHECK(r.epsilon_total == PrivacyBudget(2.0, 0.1, 1.25));
  const std::string text = r.to_text();
  CHECK(text.find("calib_hash=") != std::string::npos);
  PrivacyReceipt back = PrivacyReceipt::FromText(text);
  CHECK(back.bound == r.bound);
  CHECK(back.epsilon_total == r.epsilon_total);
  CHECK(back.calib_hash == r.calib_hash);
}

TEST_CASE("estimate xi") {
  Rng rng(12);
  Tensor xr = RandomTensor(6, 4, -1, 1, rng);
  CHECK(EstimateXi(Gain(4, 1.0), xr) == doctest::Approx(1.0));
  CHECK(EstimateXi(Gain(4, -2.5), xr) == doctest::Approx(2.5));

  for (int rep = 0; rep < 10; ++rep) {
    std::size_t w[] = {5, 7, 3};
    Network f2 = MakeMlp(w, false, rng);
    Tensor x = RandomTensor(3, 5, -1, 1, rng);
    if (cosplit::testing::ReluMargin(f2, x) < 1e-3) continue;
    double fd_max = 0.0;
    const double h = 1e-6;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t k = 0; k < 5; ++k) {
        Tensor up = x, dn = x;
        up(r, k) += h;
        dn(r, k) -= h;
        Tensor yu = Predict(f2, up), yd = Predict(f2, dn);
        for (std::size_t j = 0; j < 3; ++j) {
          fd_max = std::max(fd_max, std::abs((yu(r, j) - yd(r, j)) / (2 * h)));
        }
      }
    }
    CHECK(cosplit::testing::RelErr(EstimateXi(f2, x), fd_max) < 1e-4);
  }
}

TEST_CASE("dp_transform degenerate noise is the clipped front") {
  Rng rng(13);
  std::size_t w[] = {6, 8, 5};
  Network front = MakeMlp(w, false, rng);
  Tensor x = RandomTensor(10, 6, 0, 1, rng);
  DpConfig cfg;
  cfg.bound = 0.3;
  cfg.epsilon = kInf;
  auto out = DpTransform(front, x, cfg, rng);
  Tensor ref = ClipInf(Predict(front, x), 0.3);
  CHECK(MaxAbsDiff(out.output, ref) <= 1e-9);
  CHECK(BitwiseEqual(DpTransform(front, x, DpConfig::Disabled(), rng).output, Predict(front, x)));
}

TEST_CASE("dp_transform is reproducible under seed and bounded before noise") {
  Rng init(14);
  std::size_t w[] = {6, 8, 5};
  Network front = MakeMlp(w, false, init);
  DpConfig cfg;
  cfg.bound = 0.2;
  cfg.epsilon = 1.0;
  cfg.eta = 0.2;
  cfg.noise_layer_index = 1;
  Tensor x = RandomTensor(1000, 6, -3, 3, init);
  Rng a(99), b(99), c(100);
  auto ra = DpTransform(front, x, cfg, a);
  auto rb = DpTransform(front, x, cfg, b);
  auto rc = DpTransform(front, x, cfg, c);
  CHECK(BitwiseEqual(ra.output, rb.output));
  CHECK(!BitwiseEqual(ra.output, rc.output));
  CHECK(ra.clipped.max_abs() <= 0.2);
  CHECK(ra.receipt.epsilon_total == doctest::Approx(PrivacyBudget(1.0, 0.2, ra.receipt.xi)));
}

TEST_CASE("dp_backward without dp is the plain backward") {
  Rng rng(15);
  std::size_t w[] = {4, 6, 3};
  Network front = MakeMlp(w, false, rng);
  Tensor x = RandomTensor(5, 4, 0, 1, rng);
  Tensor up = RandomTensor(5, 3, -1, 1, rng);
  auto fwd = DpTransform(front, x, DpConfig::Disabled(), rng);
  auto g = DpBackward(front, fwd, DpConfig::Disabled(), up);
  auto ref = Backward(front, Forward(front, x).tape, up);
  for (std::size_t i = 0; i < front.depth(); ++i) {
    if (!ref.param_grads[i]) continue;
    CHECK(MaxAbsDiff(g.param_grads[i]->weight, ref.param_grads[i]->weight) <= 1e-14);
    CHECK(MaxAbsDiff(g.param_grads[i]->bias, ref.param_grads[i]->bias) <= 1e-14);
  }
}

TEST_CASE("dp_backward through an active clip matches finite differences") {
  Rng rng(16);
  std::size_t w[] = {3, 4};
  Network front = MakeMlp(w, false, rng);
  DpConfig cfg;
  cfg.bound = 0.05;  // every row is clipped
  Tensor x = RandomTensor(2, 3, 0.2, 1, rng);
  Tensor up = RandomTensor(2, 4, -1, 1, rng);
  auto loss = [&](const Network& f) {
    Rng r(0);
    Tensor y = DpTransform(f, x, cfg, r).output;
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
    return s / 2.0;
  };
  Rng r0(0);
  auto fwd = DpTransform(front, x, cfg, r0);
  auto g = DpBackward(front, fwd, cfg, up);
  const double h = 1e-6;
  for (std::size_t k = 0; k < 12; ++k) {
    Network p = front, m = front;
    std::get<Affine>(p.mutable_layer(0).op).weight[k] += h;
    std::get<Affine>(m.mutable_layer(0).op).weight[k] -= h;
    const double fd = (loss(p) - loss(m)) / (2 * h);
    CHECK(cosplit::testing::RelErr(g.param_grads[0]->weight[k], fd) < 1e-4);
  }
}

TEST_CASE("empirical dp: scalar mechanism") {
  auto f = [](std::span<const double> v) { return std::clamp(v[0], -1.0, 1.0); };
  const double x[] = {1.0}, xp[] = {-1.0};
  Rng rng(17);
  const double tight = VerifyDpScalar(f, x, xp, 1.0, 1.0, 1.0, 1000000, rng);
  CHECK(tight <= 1.1);
  CHECK(tight >= 0.9);  // the pair attains the bound, so the estimate must see it
  CHECK(VerifyDpScalar(f, x, xp, 1.0, 2.0, 1.0, 1000000, rng) <= 0.55);
  auto constant = [](std::span<const double>) { return 0.25; };
  CHECK(VerifyDpScalar(constant, x, xp, 1.0, 1.0, 1.0, 200000, rng) <= 0.1);
  try {
    VerifyDpScalar(f, x, xp, 1.0, 1.0, 1.0, 1000, rng);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kInsufficientSamples);
  }
}

TEST_CASE("empirical dp: nullified mechanism") {
  auto f = [](std::span<const double> v) { return std::clamp(v[0], -1.0, 1.0); };
  const double x[] = {1.0}, xp[] = {-1.0};
  Rng rng(18);
  CHECK(VerifyDpNullified(f, x, xp, 1.0, 0.0, 1.0, 1000000, rng) <= 1.1);
  CHECK(VerifyDpNullified(f, x, xp, 1.0, 0.5, 1.0, 1000000, rng) <=
        std::log(0.5 * std::exp(1.0) + 0.5) + 0.05);
  // Identical distributions: only histogram noise remains.
  CHECK(VerifyDpNullified(f, x, xp, 1.0, 1.0, 1.0, 1000000, rng) <= 0.1);
}

TEST_CASE("calibrate bound is the median row norm") {
  Network id = Gain(2, 1.0);
  Tensor x = Tensor::FromRows({{1, 0}, {0, -3}, {2, 0.5}});
  CHECK(CalibrateBound(id, 1, x) == 2.0);
}
