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


#include <cmath>

#include "doctest.h"

#include "cosplit/error.hpp"
#include "cosplit/reduction.hpp"
#include "support.hpp"

using namespace cosplit;

namespace {

Errc CodeOf(std::string_view text) {
  try {
    ParseDimacs(text);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kIo;  // sentinel: no throw
}

}  // namespace

TEST_CASE("dimacs parsing") {
  auto f = ParseDimacs("p cnf 3 1\n1 2 3 0\n");
  CHECK(f.n_vars == 3);
  REQUIRE(f.n_clauses() == 1);
  CHECK(f.clauses[0] == std::vector<int>{1, 2, 3});
  CHECK(f.occurrence_bound() == 1);

  auto g = ParseDimacs("c comment\np cnf 2 1\n1 -2 0\n");
  CHECK(g.clauses[0] == std::vector<int>{1, -2});

  CHECK(CodeOf("p cnf 4 1\n1 2 3 4 0\n") == Errc::kParseError);
  CHECK(CodeOf("p cnf 2 1\n1 3 0\n") == Errc::kParseError);
  CHECK(CodeOf("p cnf 2 2\n1 2 0\n") == Errc::kParseError);
  CHECK(CodeOf("p dnf 2 1\n1 2 0\n") == Errc::kParseError);
  CHECK(CodeOf("p cnf 2 1\n1 2\n") == Errc::kParseError);
  CHECK(CodeOf("p cnf 2 1\n1 1 0\n") == Errc::kParseError);

  auto back = ParseDimacs(ToDimacs(g));
  CHECK(back.clauses == g.clauses);
}

TEST_CASE("single clause network values and dims") {
  auto f = ParseDimacs("p cnf 3 1\n1 2 3 0\n");
  auto net = BuildReduction(f);
  CHECK(net.dims.p == 3);
  CHECK(net.dims.m1 == 601);
  CHECK(net.dims.o == 301);

  // X1 true, others false.
  Tensor x = Tensor::FromRows({{-1, 1, 1}});
  CHECK(net.squared_distance(x)[0] == 0.0);
  Tensor full = net.expand(Predict(net.compact, x));
  CHECK(BitwiseEqual(full, net.target().as_matrix()));

  Tensor all_false = Tensor::FromRows({{1, 1, 1}});
  Tensor y = Predict(net.compact, all_false);
  CHECK(y(0, 0) == 1.0);
  CHECK(net.squared_distance(all_false)[0] >= 1.0);

  // Exactly the seven satisfying assignments hit the target.
  Tensor enc = EncodeAssignments(3, 0, 8);
  auto d = net.squared_distance(enc);
  for (std::uint64_t a = 0; a < 8; ++a) CHECK((d[a] == 0.0) == f.satisfied(a));
}

TEST_CASE("dense network equals the expanded compact network") {
  Rng rng(1);
  // Dense width grows with Q^2, so keep occurrence counts small.
  const char* texts[] = {
      "p cnf 3 1\n1 2 3 0\n",
      "p cnf 6 2\n1 2 -3 0\n-4 5 6 0\n",
      "p cnf 3 2\n1 -2 3 0\n-1 2 0\n",
  };
  for (const char* text : texts) {
    auto f = ParseDimacs(text);
    auto net = BuildReduction(f);
    Network dense = net.to_dense_network();
    CHECK(dense.input_dim() == net.dims.p);
    CHECK(dense.output_dim() == net.dims.o);
    Tensor x = cosplit::testing::RandomTensor(6, f.n_vars, -1.5, 1.5, rng);
    Tensor enc = EncodeAssignments(f.n_vars, 0, std::uint64_t{1} << f.n_vars);
    for (const Tensor* in : {&x, &enc}) {
      Tensor a = Predict(dense, *in);
      Tensor b = net.expand(Predict(net.compact, *in));
      CHECK(a.shape() == b.shape());
      CHECK(MaxAbsDiff(a, b) <= 1e-12);
    }
  }
}

TEST_CASE("property: dimension formulas") {
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 3 + rng.below(8), m = 1 + rng.below(15);
    auto f = RandomE3Cnf(n, m, rng);
    auto net = BuildReduction(f);
    const std::size_t q = f.occurrence_bound();
    CHECK(net.dims.p == n);
    CHECK(net.dims.m1 == m + 200 * q * q * n);
    CHECK(net.dims.o == m + 100 * q * q * n);
  }
}

TEST_CASE("unsatisfiable instance is vacuously complete") {
  auto f = ParseDimacs("p cnf 1 2\n1 0\n-1 0\n");
  auto net = BuildReduction(f);
  auto rep = CheckCompleteness(net, f);
  CHECK(rep.satisfying == 0);
  CHECK(rep.violations == 0);
  CHECK(rep.false_hits == 0);
}

TEST_CASE("random instances: completeness and counting, exhaustive") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 3 + rng.below(6);
    auto f = RandomE3Cnf(n, 1 + rng.below(10), rng);
    auto net = BuildReduction(f);
    auto c = CheckCompleteness(net, f);
    CHECK(c.violations == 0);
    CHECK(c.false_hits == 0);
    Rng r2(rep);
    auto s = CheckSoundness(net, f, 1.0 / (60.0 * f.occurrence_bound()), 50, r2);
    CHECK(s.counting_violations == 0);
    CHECK(s.count_mismatches == 0);
    CHECK(s.radius_violations == 0);
    CHECK(s.rounding_violations == 0);
  }
}

TEST_CASE("soundness without rounding samples") {
  auto f = ParseDimacs("p cnf 3 2\n1 2 3 0\n-1 -2 -3 0\n");
  Rng rng(5);
  auto s = CheckSoundness(BuildReduction(f), f, 0.01, 0, rng);
  CHECK(s.rounding_samples == 0);
  CHECK(s.counting_violations == 0);
}

TEST_CASE("rounding to signs") {
  Tensor r = RoundToSigns(Tensor::FromRows({{0.3, -0.7, 0.0}}));
  CHECK(r.values() == std::vector<double>{1, -1, 1});
}

TEST_CASE("size limits") {
  Rng rng(4);
  CHECK_THROWS_AS(BuildReduction(RandomE3Cnf(13, 2, rng)), Error);
  CHECK_THROWS_AS(BuildReduction(RandomE3Cnf(5, 21, rng)), Error);
}

TEST_CASE("report lines") {
  auto f = ParseDimacs("p cnf 3 1\n1 2 3 0\n");
  auto net = BuildReduction(f);
  auto c = CheckCompleteness(net, f);
  const std::string s = FormatReductionReport("tiny", net, &c, nullptr);
  CHECK(s.find("dims=3,601,301") != std::string::npos);
  CHECK(s.find("completeness_violations=0") != std::string::npos);
  CHECK(s.find("satisfying_assignments=7") != std::string::npos);
}
