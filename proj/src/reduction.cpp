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

#include "cosplit/reduction.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "cosplit/error.hpp"

namespace cosplit {

std::size_t CnfInstance::occurrence_bound() const {
  std::vector<std::size_t> occ(n_vars + 1, 0);
  for (const auto& c : clauses) {
    std::vector<int> vars;
    for (int lit : c) vars.push_back(std::abs(lit));
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    for (int v : vars) ++occ[static_cast<std::size_t>(v)];
  }
  const std::size_t q = *std::max_element(occ.begin(), occ.end());
  return std::max<std::size_t>(q, 1);
}

void CnfInstance::validate() const {
  if (n_vars == 0) throw Error(Errc::kInvalidArgument, "formula has no variables");
  for (const auto& c : clauses) {
    if (c.empty()) throw Error(Errc::kInvalidArgument, "empty clause");
    if (c.size() > 3) throw Error(Errc::kInvalidArgument, "clause has more than 3 literals");
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i] == 0 || static_cast<std::size_t>(std::abs(c[i])) > n_vars) {
        throw Error(Errc::kInvalidArgument, "literal out of range");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (c[i] == c[j]) throw Error(Errc::kInvalidArgument, "duplicate literal in clause");
      }
    }
  }
}

namespace {

bool LiteralTrue(int lit, std::uint64_t assignment) {
  const bool x = (assignment >> (std::abs(lit) - 1)) & 1U;
  return lit > 0 ? x : !x;
}

}  // namespace

bool CnfInstance::satisfied(std::uint64_t assignment) const {
  return unsatisfied_count(assignment) == 0;
}

std::size_t CnfInstance::unsatisfied_count(std::uint64_t assignment) const {
  std::size_t unsat = 0;
  for (const auto& c : clauses) {
    bool sat = false;
    for (int lit : c) sat = sat || LiteralTrue(lit, assignment);
    unsat += !sat;
  }
  return unsat;
}

CnfInstance ParseDimacs(std::string_view text) {
  CnfInstance f;
  bool have_header = false;
  std::size_t declared = 0;
  std::vector<int> current;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  const auto fail = [&](const std::string& why) {
    throw Error(Errc::kParseError, "line " + std::to_string(line_no) + ": " + why);
  };
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.remove_suffix(1);
    }
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    line.remove_prefix(first);
    if (line[0] == 'c') continue;
    if (line[0] == '%') break;
    std::istringstream in{std::string(line)};
    if (line[0] == 'p') {
      if (have_header) fail("duplicate header");
      std::string p, fmt;
      long long n = -1, m = -1;
      std::string extra;
      if (!(in >> p >> fmt >> n >> m) || p != "p" || fmt != "cnf" || n <= 0 || m < 0 ||
          (in >> extra)) {
        fail("bad header, expected 'p cnf <n> <m>'");
      }
      f.n_vars = static_cast<std::size_t>(n);
      declared = static_cast<std::size_t>(m);
      have_header = true;
      continue;
    }
    if (!have_header) fail("clause before header");
    std::string tok;
    while (in >> tok) {
      int lit = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), lit);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad literal '" + tok + "'");
      if (lit == 0) {
        if (current.empty()) fail("empty clause");
        f.clauses.push_back(std::move(current));
        current.clear();
        continue;
      }
      if (static_cast<std::size_t>(std::abs(lit)) > f.n_vars) {
        fail("literal " + tok + " out of range");
      }
      if (std::find(current.begin(), current.end(), lit) != current.end()) {
        fail("duplicate literal " + tok);
      }
      current.push_back(lit);
      if (current.size() > 3) fail("clause size exceeds 3");
    }
  }
  if (!have_header) throw Error(Errc::kParseError, "missing 'p cnf' header");
  if (!current.empty()) throw Error(Errc::kParseError, "clause missing terminating 0");
  if (f.clauses.size() != declared) {
    throw Error(Errc::kParseError, "header declares " + std::to_string(declared) +
                                       " clauses, found " + std::to_string(f.clauses.size()));
  }
  return f;
}

std::string ToDimacs(const CnfInstance& f) {
  std::ostringstream out;
  out << "p cnf " << f.n_vars << ' ' << f.clauses.size() << '\n';
  for (const auto& c : f.clauses) {
    for (int lit : c) out << lit << ' ';
    out << "0\n";
  }
  return out.str();
}

CnfInstance RandomE3Cnf(std::size_t n_vars, std::size_t n_clauses, Rng& rng) {
  if (n_vars < 3) throw Error(Errc::kInvalidArgument, "E3 clauses need at least 3 variables");
  CnfInstance f;
  f.n_vars = n_vars;
  for (std::size_t j = 0; j < n_clauses; ++j) {
    std::vector<int> c;
    while (c.size() < 3) {
      const int v = static_cast<int>(rng.below(n_vars)) + 1;
      const bool dup = std::any_of(c.begin(), c.end(), [&](int l) { return std::abs(l) == v; });
      if (!dup) c.push_back(rng.below(2) ? v : -v);
    }
    f.clauses.push_back(std::move(c));
  }
  return f;
}

// ---------------------------------------------------------------------------

ReductionNet BuildReduction(const CnfInstance& f) {
  f.validate();
  if (f.n_vars > kReductionMaxVars || f.n_clauses() > kReductionMaxClauses) {
    throw Error(Errc::kTooLarge, "reduction limited to n <= 12 and m <= 20");
  }
  ReductionNet net;
  net.n = f.n_vars;
  net.m = f.n_clauses();
  net.q = f.occurrence_bound();
  net.copies = 100 * net.q * net.q;
  net.dims = {net.n, net.m + 2 * net.copies * net.n, net.m + net.copies * net.n};

  const std::size_t n = net.n;
  const std::size_t m = net.m;
  net.w1_clauses = Tensor::Zeros(std::max<std::size_t>(m, 1), n);
  net.b_clauses = Tensor({std::max<std::size_t>(m, 1)});
  for (std::size_t j = 0; j < m; ++j) {
    for (int lit : f.clauses[j]) {
      net.w1_clauses(j, static_cast<std::size_t>(std::abs(lit)) - 1) = lit > 0 ? 1.0 : -1.0;
    }
    // All-false clause of size k sums to k; any true literal pulls it to <= k - 2.
    net.b_clauses[j] = 1.0 - static_cast<double>(f.clauses[j].size());
  }

  const std::size_t hidden = m + 2 * n;
  Tensor w1 = Tensor::Zeros(hidden, n);
  Tensor b1({hidden});
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) w1(j, i) = net.w1_clauses(j, i);
    b1[j] = net.b_clauses[j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    w1(m + i, i) = 1.0;       // max{x_i, 0}
    w1(m + n + i, i) = -1.0;  // max{-x_i, 0}
  }
  Tensor w2 = Tensor::Zeros(m + n, hidden);
  for (std::size_t j = 0; j < m; ++j) w2(j, j) = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    w2(m + i, m + i) = 1.0;
    w2(m + i, m + n + i) = 1.0;
  }
  net.compact = Network({Layer::MakeAffine(std::move(w1), std::move(b1), false), Layer::MakeRelu(),
                         Layer::MakeAffine(std::move(w2), Tensor({m + n}), false)});
  net.multiplicity.assign(m, 1);
  net.multiplicity.insert(net.multiplicity.end(), n, net.copies);
  net.compact_target = Tensor({m + n});
  for (std::size_t i = 0; i < n; ++i) net.compact_target[m + i] = 1.0;
  return net;
}

std::vector<double> ReductionNet::squared_distance(const Tensor& x) const {
  const Tensor g = Predict(compact, x.as_matrix());
  std::vector<double> out(g.rows(), 0.0);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < g.cols(); ++k) {
      const double d = g(r, k) - compact_target[k];
      s += static_cast<double>(multiplicity[k]) * d * d;
    }
    out[r] = s;
  }
  return out;
}

Tensor ReductionNet::expand(const Tensor& compact_out) const {
  const Tensor g = compact_out.as_matrix();
  Tensor out = Tensor::Zeros(g.rows(), dims.o);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < g.cols(); ++k) {
      for (std::size_t c = 0; c < multiplicity[k]; ++c) out(r, col++) = g(r, k);
    }
  }
  return out;
}

Tensor ReductionNet::target() const {
  Tensor t({dims.o});
  for (std::size_t k = m; k < dims.o; ++k) t[k] = 1.0;
  return t;
}

Network ReductionNet::to_dense_network() const {
  constexpr std::size_t kMaxWeights = std::size_t{8} << 20;
  if (dims.m1 * (dims.p + dims.o) > kMaxWeights) {
    throw Error(Errc::kTooLarge, "dense reduction network exceeds the weight budget");
  }
  const std::size_t half = copies * n;  // copy neurons per sign
  Tensor w1 = Tensor::Zeros(dims.m1, dims.p);
  Tensor b1({dims.m1});
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) w1(j, i) = w1_clauses(j, i);
    b1[j] = b_clauses[j];
  }
  // Copy slot t belongs to variable t / copies.
  for (std::size_t t = 0; t < half; ++t) {
    w1(m + t, t / copies) = 1.0;
    w1(m + half + t, t / copies) = -1.0;
  }
  Tensor w2 = Tensor::Zeros(dims.o, dims.m1);
  for (std::size_t j = 0; j < m; ++j) w2(j, j) = 1.0;
  for (std::size_t t = 0; t < half; ++t) {
    w2(m + t, m + t) = 1.0;
    w2(m + t, m + half + t) = 1.0;
  }
  return Network({Layer::MakeAffine(std::move(w1), std::move(b1), false), Layer::MakeRelu(),
                  Layer::MakeAffine(std::move(w2), Tensor({dims.o}), false)});
}

Tensor EncodeAssignments(std::size_t n, std::uint64_t begin, std::uint64_t end) {
  Tensor x = Tensor::Zeros(end - begin, n);
  for (std::uint64_t a = begin; a < end; ++a) {
    for (std::size_t i = 0; i < n; ++i) x(a - begin, i) = ((a >> i) & 1U) ? -1.0 : 1.0;
  }
  return x;
}

Tensor RoundToSigns(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = v < 0.0 ? -1.0 : 1.0;
  return out;
}

namespace {

constexpr std::uint64_t kChunk = 1024;

void CheckSize(const ReductionNet& net, const CnfInstance& f) {
  if (net.n != f.n_vars || net.m != f.n_clauses()) {
    throw Error(Errc::kDimensionMismatch, "network was built for a different formula");
  }
  if (net.n > kReductionMaxVars) throw Error(Errc::kTooLarge, "exhaustive check needs n <= 12");
}

}  // namespace

CompletenessReport CheckCompleteness(const ReductionNet& net, const CnfInstance& f) {
  CheckSize(net, f);
  CompletenessReport rep;
  const std::uint64_t total = std::uint64_t{1} << net.n;
  for (std::uint64_t begin = 0; begin < total; begin += kChunk) {
    const std::uint64_t end = std::min(total, begin + kChunk);
    const Tensor g = Predict(net.compact, EncodeAssignments(net.n, begin, end));
    for (std::uint64_t a = begin; a < end; ++a) {
      bool hit = true;
      for (std::size_t k = 0; k < g.cols(); ++k) hit = hit && g(a - begin, k) == net.compact_target[k];
      const bool sat = f.satisfied(a);
      rep.satisfying += sat;
      if (sat && !hit) ++rep.violations;
      if (!sat && hit) ++rep.false_hits;
    }
  }
  return rep;
}

SoundnessReport CheckSoundness(const ReductionNet& net, const CnfInstance& f, double gamma,
                               std::size_t rounding_samples, Rng& rng) {
  CheckSize(net, f);
  SoundnessReport rep;
  rep.gamma = gamma;
  rep.radius = gamma * std::sqrt(static_cast<double>(net.dims.o));
  rep.asymptotic_bound = (0.125 - 5.0 / std::sqrt(static_cast<double>(net.q))) *
                         static_cast<double>(net.m);
  rep.asymptotic_bound_active = rep.asymptotic_bound > 0.0;
  rep.max_unsat_over_bound = -std::numeric_limits<double>::infinity();

  const std::uint64_t total = std::uint64_t{1} << net.n;
  for (std::uint64_t begin = 0; begin < total; begin += kChunk) {
    const std::uint64_t end = std::min(total, begin + kChunk);
    const Tensor x = EncodeAssignments(net.n, begin, end);
    const Tensor g = Predict(net.compact, x);
    const auto d2 = net.squared_distance(x);
    for (std::uint64_t a = begin; a < end; ++a) {
      const std::size_t r = a - begin;
      const double unsat = static_cast<double>(f.unsatisfied_count(a));
      double clause_sum = 0.0;
      for (std::size_t j = 0; j < net.m; ++j) clause_sum += g(r, j);
      if (clause_sum != unsat) ++rep.count_mismatches;
      if (unsat > d2[r]) ++rep.counting_violations;
      rep.max_unsat_over_bound = std::max(rep.max_unsat_over_bound, unsat - d2[r]);
      if (std::sqrt(d2[r]) <= rep.radius) {
        ++rep.within_radius;
        const double bound = rep.asymptotic_bound_active ? rep.asymptotic_bound : d2[r];
        if (unsat > bound) ++rep.radius_violations;
      }
    }
  }

  // Rounding a continuous point to signs costs at most n/100 in squared distance.
  const double gap_limit = static_cast<double>(net.n) / 100.0 + 1e-9;
  if (rounding_samples > 0) {
    rep.max_rounding_gap = -std::numeric_limits<double>::infinity();
    Tensor x = Tensor::Zeros(rounding_samples, net.n);
    for (double& v : x.data()) v = rng.uniform(-1.5, 1.5);
    const Tensor xbar = RoundToSigns(x);
    const auto d_x = net.squared_distance(x);
    const auto d_bar = net.squared_distance(xbar);
    for (std::size_t r = 0; r < rounding_samples; ++r) {
      bool nearest = true;
      for (std::size_t i = 0; i < net.n; ++i) {
        nearest = nearest && std::abs(xbar(r, i) - x(r, i)) <= std::abs(-xbar(r, i) - x(r, i));
      }
      const double gap = d_bar[r] - d_x[r];
      rep.max_rounding_gap = std::max(rep.max_rounding_gap, gap);
      if (!nearest || gap > gap_limit) ++rep.rounding_violations;
    }
  }
  rep.rounding_samples = rounding_samples;
  return rep;
}

std::string FormatReductionReport(const std::string& instance, const ReductionNet& net,
                                  const CompletenessReport* c, const SoundnessReport* s) {
  std::ostringstream out;
  out.precision(10);
  out << "instance=" << instance << '\n'
      << "n=" << net.n << '\n'
      << "m=" << net.m << '\n'
      << "Q=" << net.q << '\n'
      << "dims=" << net.dims.p << ',' << net.dims.m1 << ',' << net.dims.o << '\n';
  if (c) {
    out << "satisfying_assignments=" << c->satisfying << '\n'
        << "completeness_violations=" << c->violations << '\n'
        << "false_hits=" << c->false_hits << '\n';
  }
  if (s) {
    out << "gamma=" << s->gamma << '\n'
        << "within_radius=" << s->within_radius << '\n'
        << "radius_violations=" << s->radius_violations << '\n'
        << "counting_violations=" << s->counting_violations << '\n'
        << "max_unsat_over_bound=" << s->max_unsat_over_bound << '\n'
        << "rounding_violations=" << s->rounding_violations << '\n'
        << "max_rounding_gap=" << s->max_rounding_gap << '\n';
  }
  return out.str();
}

}  // namespace cosplit
