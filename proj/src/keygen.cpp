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

#include "cosplit/keygen.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <numeric>
#include <sstream>

#include "cosplit/error.hpp"

namespace cosplit {

uint128 CountDerangements(std::size_t i) {
  if (i > kMaxDerangementN) {
    throw Error(Errc::kOverflow, "derangement count for n=" + std::to_string(i) +
                                     " exceeds the supported range (n <= 33)");
  }
  uint128 prev2 = 1;  // D_0
  uint128 prev1 = 0;  // D_1
  if (i == 0) return prev2;
  for (std::size_t k = 2; k <= i; ++k) {
    const uint128 next = static_cast<uint128>(k - 1) * (prev1 + prev2);
    prev2 = prev1;
    prev1 = next;
  }
  return prev1;
}

std::string ToDecimal(uint128 v) {
  if (v == 0) return "0";
  std::string s;
  while (v > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::reverse(s.begin(), s.end());
  return s;
}

Permutation::Permutation(std::vector<std::uint32_t> forward) : forward_(std::move(forward)) {
  inverse_.assign(forward_.size(), UINT32_MAX);
  for (std::size_t i = 0; i < forward_.size(); ++i) {
    const std::uint32_t t = forward_[i];
    if (t >= forward_.size() || inverse_[t] != UINT32_MAX) {
      throw Error(Errc::kInvalidArgument, "mapping is not a bijection");
    }
    inverse_[t] = static_cast<std::uint32_t>(i);
  }
}

Permutation Permutation::Identity(std::size_t n) {
  std::vector<std::uint32_t> f(n);
  std::iota(f.begin(), f.end(), 0u);
  return Permutation(std::move(f));
}

std::uint32_t Permutation::encrypt(std::uint32_t label) const {
  if (label >= forward_.size()) throw Error(Errc::kIndexOutOfRange, "label out of range");
  return forward_[label];
}

std::uint32_t Permutation::decrypt(std::uint32_t label) const {
  if (label >= inverse_.size()) throw Error(Errc::kIndexOutOfRange, "label out of range");
  return inverse_[label];
}

bool Permutation::is_derangement() const {
  for (std::size_t i = 0; i < forward_.size(); ++i) {
    if (forward_[i] == i) return false;
  }
  return true;
}

DerangementKey::DerangementKey(std::vector<std::uint32_t> forward)
    : Permutation(std::move(forward)) {
  if (size() < 2) throw Error(Errc::kInvalidClassCount, "a key needs at least 2 classes");
  if (!is_derangement()) throw Error(Errc::kInvalidArgument, "key has a fixed point");
}

std::string DerangementKey::to_text() const {
  std::ostringstream os;
  os << "N=" << size() << "\nkey=";
  for (std::size_t i = 0; i < size(); ++i) os << (i ? "," : "") << forward()[i];
  os << '\n';
  return os.str();
}

DerangementKey DerangementKey::FromText(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  long long n = -1;
  std::vector<std::uint32_t> mapping;
  bool have_key = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("N=", 0) == 0) {
      try {
        n = std::stoll(line.substr(2));
      } catch (const std::exception&) {
        throw Error(Errc::kParseError, "bad N line: " + line);
      }
    } else if (line.rfind("key=", 0) == 0) {
      std::istringstream items(line.substr(4));
      std::string item;
      while (std::getline(items, item, ',')) {
        try {
          std::size_t used = 0;
          const long long v = std::stoll(item, &used);
          if (used != item.size() || v < 0 || v > UINT32_MAX) throw std::out_of_range(item);
          mapping.push_back(static_cast<std::uint32_t>(v));
        } catch (const std::exception&) {
          throw Error(Errc::kParseError, "bad key entry '" + item + "'");
        }
      }
      have_key = true;
    } else {
      throw Error(Errc::kParseError, "unexpected line: " + line);
    }
  }
  if (n < 0 || !have_key) throw Error(Errc::kParseError, "key file needs N= and key= lines");
  if (static_cast<std::size_t>(n) != mapping.size()) {
    throw Error(Errc::kParseError, "N does not match key length");
  }
  return DerangementKey(std::move(mapping));
}

DerangementKey KeyGen(std::size_t n_classes, Rng& rng) {
  using boost::multiprecision::uint256_t;
  if (n_classes < 2) throw Error(Errc::kInvalidClassCount, "need N >= 2");
  if (n_classes > kMaxDerangementN) {
    throw Error(Errc::kInvalidClassCount, "N > 33 is not supported");
  }
  std::vector<uint128> d(n_classes + 1);
  for (std::size_t k = 0; k <= n_classes; ++k) d[k] = CountDerangements(k);

  std::vector<std::uint32_t> key(n_classes);
  std::iota(key.begin(), key.end(), 0u);
  std::vector<bool> mark(n_classes, false);
  // Martinez-Panholzer-Prodinger: walk i downward; each unmarked i swaps with
  // a random unmarked j < i, and with probability (u-1) D_{u-2} / D_u the pair
  // closes a 2-cycle and j is retired as well.
  std::size_t i = n_classes - 1;
  std::size_t u = n_classes;
  const auto to256 = [](uint128 v) {
    return (uint256_t(static_cast<std::uint64_t>(v >> 64)) << 64) |
           uint256_t(static_cast<std::uint64_t>(v));
  };
  while (u >= 2) {
    if (!mark[i]) {
      std::size_t j;
      do {
        j = static_cast<std::size_t>(rng.below(i));
      } while (mark[j]);
      std::swap(key[i], key[j]);
      // p < (u-1) D_{u-2} / D_u  <=>  bits * D_u < (u-1) D_{u-2} * 2^53
      const uint256_t lhs = uint256_t(rng.bits53()) * to256(d[u]);
      const uint256_t rhs = (uint256_t(u - 1) * to256(d[u - 2])) << 53;
      if (lhs < rhs) {
        mark[j] = true;
        --u;
      }
      --u;
    }
    --i;
  }
  return DerangementKey(std::move(key));
}

std::vector<Permutation> EnumerateDerangements(std::size_t n) {
  if (n > 10) throw Error(Errc::kKeySpaceTooLarge, "enumeration limited to n <= 10");
  std::vector<std::uint32_t> p(n);
  std::iota(p.begin(), p.end(), 0u);
  std::vector<Permutation> out;
  do {
    bool ok = true;
    for (std::size_t k = 0; k < n && ok; ++k) ok = p[k] != k;
    if (ok) out.emplace_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

}  // namespace cosplit
