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

#ifndef COSPLIT_KEYGEN_HPP_
#define COSPLIT_KEYGEN_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cosplit/rng.hpp"

namespace cosplit {

using uint128 = unsigned __int128;

inline constexpr std::size_t kMaxDerangementN = 33;

// Number of derangements of i elements (D_0 = 1, D_1 = 0,
// D_i = (i-1)(D_{i-1} + D_{i-2})). Throws kOverflow for i > 33.
uint128 CountDerangements(std::size_t i);
std::string ToDecimal(uint128 v);

// Bijection on {0..N-1}; fixed points allowed.
class Permutation {
 public:
  explicit Permutation(std::vector<std::uint32_t> forward);
  static Permutation Identity(std::size_t n);

  std::size_t size() const { return forward_.size(); }
  std::span<const std::uint32_t> forward() const { return forward_; }
  std::span<const std::uint32_t> inverse() const { return inverse_; }

  std::uint32_t encrypt(std::uint32_t label) const;
  std::uint32_t decrypt(std::uint32_t label) const;

  bool is_derangement() const;
  bool operator==(const Permutation& other) const { return forward_ == other.forward_; }

 private:
  std::vector<std::uint32_t> forward_;
  std::vector<std::uint32_t> inverse_;
};

// Permutation with no fixed points; the label-encryption key.
class DerangementKey : public Permutation {
 public:
  explicit DerangementKey(std::vector<std::uint32_t> forward);

  // Key file: "N=<n>\nkey=<comma separated forward mapping>\n".
  std::string to_text() const;
  static DerangementKey FromText(const std::string& text);
};

// Uniform random derangement of N >= 2 elements.
DerangementKey KeyGen(std::size_t n_classes, Rng& rng);

// Every derangement of n elements in lexicographic order (n <= 10).
std::vector<Permutation> EnumerateDerangements(std::size_t n);

}  // namespace cosplit

#endif  // COSPLIT_KEYGEN_HPP_
