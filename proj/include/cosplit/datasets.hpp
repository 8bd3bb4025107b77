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

#ifndef COSPLIT_DATASETS_HPP_
#define COSPLIT_DATASETS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cosplit/rng.hpp"
#include "cosplit/tensor.hpp"

namespace cosplit {

struct LabeledSet {
  Tensor inputs;  // [M x p], values in [0, 1]
  std::vector<std::uint32_t> labels;
  std::size_t n_classes = 0;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  LabeledSet subset(std::span<const std::size_t> indices) const;
  // Label histogram of length n_classes.
  std::vector<std::size_t> histogram() const;
};

// Gaussian clusters around seeded centers in [0.15, 0.85]^dim. Rows are
// interleaved by class (row i has label i % n_classes).
LabeledSet GenBlobs(std::size_t n_classes, std::size_t per_class, std::size_t dim, double spread,
                    std::uint64_t seed);

// Same as GenBlobs but with the first `n_classes` centers drawn from a
// shared center seed and samples from `sample_seed`; lets train and held-out
// splits share the cluster geometry.
LabeledSet GenBlobs(std::size_t n_classes, std::size_t per_class, std::size_t dim, double spread,
                    std::uint64_t center_seed, std::uint64_t sample_seed);

LabeledSet ReadIdx(const std::string& images_path, const std::string& labels_path);
LabeledSet DecodeIdx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

// Label y is owned by the device when y is even, by the server when odd.
// Each sample goes to its owner with probability alpha, otherwise to a
// uniformly chosen agent. Relative row order is preserved.
std::pair<LabeledSet, LabeledSet> PartitionNonIid(const LabeledSet& set, double alpha,
                                                  std::uint64_t seed);

// Bucket b holds labels in (boundaries[b-1], boundaries[b]]; the last
// bucket is open-ended, so the output has boundaries.size() + 1 classes.
LabeledSet RelabelCoarse(const LabeledSet& set, std::span<const std::uint32_t> boundaries);

// Random permutation of the rows.
LabeledSet Shuffled(const LabeledSet& set, Rng& rng);

// "RLTD" container: magic, version, n_classes, the input tensor, labels.
std::vector<std::uint8_t> EncodeDataset(const LabeledSet& set);
LabeledSet DecodeDataset(std::span<const std::uint8_t> bytes);
void SaveDataset(const LabeledSet& set, const std::string& path);
LabeledSet LoadDataset(const std::string& path);

}  // namespace cosplit

#endif  // COSPLIT_DATASETS_HPP_
