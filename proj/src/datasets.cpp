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

#include "cosplit/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cosplit/error.hpp"
#include "cosplit/io.hpp"

namespace cosplit {

void LabeledSet::validate() const {
  if (n_classes == 0) throw Error(Errc::kInvalidArgument, "dataset has no classes");
  if (inputs.rank() != 2 || inputs.rows() != labels.size()) {
    throw Error(Errc::kCountMismatch, "input rows != label count");
  }
  for (std::uint32_t y : labels) {
    if (y >= n_classes) throw Error(Errc::kIndexOutOfRange, "label >= n_classes");
  }
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> indices) const {
  LabeledSet out;
  out.n_classes = n_classes;
  out.inputs = indices.empty() ? Tensor() : inputs.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  return out;
}

std::vector<std::size_t> LabeledSet::histogram() const {
  std::vector<std::size_t> h(n_classes, 0);
  for (std::uint32_t y : labels) ++h.at(y);
  return h;
}

namespace {

std::vector<std::vector<double>> BlobCenters(std::size_t n_classes, std::size_t dim, Rng& rng) {
  const double min_dist = 0.25 * std::sqrt(static_cast<double>(dim));
  std::vector<std::vector<double>> centers;
  std::size_t attempts = 0;
  while (centers.size() < n_classes) {
    std::vector<double> c(dim);
    for (auto& v : c) v = rng.uniform(0.15, 0.85);
    bool ok = true;
    if (++attempts < 10000) {
      for (const auto& other : centers) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d2 += (c[k] - other[k]) * (c[k] - other[k]);
        if (d2 < min_dist * min_dist) {
          ok = false;
          break;
        }
      }
    }
    if (ok) centers.push_back(std::move(c));
  }
  return centers;
}

}  // namespace

LabeledSet GenBlobs(std::size_t n_classes, std::size_t per_class, std::size_t dim, double spread,
                    std::uint64_t center_seed, std::uint64_t sample_seed) {
  if (n_classes < 2) throw Error(Errc::kInvalidClassCount, "need at least two classes");
  if (dim < 2) throw Error(Errc::kInvalidArgument, "blob dimension must be >= 2");
  if (per_class == 0) throw Error(Errc::kInvalidArgument, "per_class must be positive");
  if (!(spread >= 0.0)) throw Error(Errc::kInvalidArgument, "spread must be >= 0");
  Rng center_rng(center_seed);
  const auto centers = BlobCenters(n_classes, dim, center_rng);
  Rng rng(sample_seed);
  LabeledSet out;
  out.n_classes = n_classes;
  out.inputs = Tensor::Zeros(n_classes * per_class, dim);
  out.labels.resize(n_classes * per_class);
  for (std::size_t i = 0; i < n_classes * per_class; ++i) {
    const std::size_t y = i % n_classes;
    out.labels[i] = static_cast<std::uint32_t>(y);
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = centers[y][k] + (spread > 0.0 ? spread * rng.normal() : 0.0);
      out.inputs(i, k) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

LabeledSet GenBlobs(std::size_t n_classes, std::size_t per_class, std::size_t dim, double spread,
                    std::uint64_t seed) {
  return GenBlobs(n_classes, per_class, dim, spread, seed, seed ^ 0x5bd1e995ULL);
}

LabeledSet DecodeIdx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  ByteReader ri(images);
  ByteReader rl(labels);
  if (ri.remaining() < 4 || ri.u32_be() != 0x00000803) {
    throw Error(Errc::kBadMagic, "image file magic is not 0x00000803");
  }
  if (rl.remaining() < 4 || rl.u32_be() != 0x00000801) {
    throw Error(Errc::kBadMagic, "label file magic is not 0x00000801");
  }
  const std::uint32_t n_img = ri.u32_be();
  const std::uint32_t rows = ri.u32_be();
  const std::uint32_t cols = ri.u32_be();
  const std::uint32_t n_lab = rl.u32_be();
  if (n_img != n_lab) {
    throw Error(Errc::kCountMismatch, std::to_string(n_img) + " images but " +
                                          std::to_string(n_lab) + " labels");
  }
  if (n_img == 0 || rows == 0 || cols == 0) {
    throw Error(Errc::kInvalidArgument, "empty IDX file");
  }
  const std::uint64_t pixels = static_cast<std::uint64_t>(n_img) * rows * cols;
  if (ri.remaining() < pixels) throw Error(Errc::kTruncated, "image data shorter than header");
  if (rl.remaining() < n_lab) throw Error(Errc::kTruncated, "label data shorter than header");
  LabeledSet out;
  out.inputs = Tensor::Zeros(n_img, static_cast<std::size_t>(rows) * cols);
  const auto px = ri.bytes(static_cast<std::size_t>(pixels));
  for (std::size_t i = 0; i < px.size(); ++i) out.inputs[i] = px[i] / 255.0;
  const auto lb = rl.bytes(n_lab);
  out.labels.assign(lb.begin(), lb.end());
  out.n_classes = 1 + *std::max_element(out.labels.begin(), out.labels.end());
  return out;
}

LabeledSet ReadIdx(const std::string& images_path, const std::string& labels_path) {
  return DecodeIdx(ReadFileBytes(images_path), ReadFileBytes(labels_path));
}

std::pair<LabeledSet, LabeledSet> PartitionNonIid(const LabeledSet& set, double alpha,
                                                  std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "alpha must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<std::size_t> device;
  std::vector<std::size_t> server;
  for (std::size_t i = 0; i < set.size(); ++i) {
    bool to_device;
    if (rng.bernoulli(alpha)) {
      to_device = set.labels[i] % 2 == 0;
    } else {
      to_device = rng.below(2) == 0;
    }
    (to_device ? device : server).push_back(i);
  }
  return {set.subset(device), set.subset(server)};
}

LabeledSet RelabelCoarse(const LabeledSet& set, std::span<const std::uint32_t> boundaries) {
  for (std::size_t b = 1; b < boundaries.size(); ++b) {
    if (boundaries[b] <= boundaries[b - 1]) {
      throw Error(Errc::kInvalidArgument, "boundaries must be strictly increasing");
    }
  }
  LabeledSet out = set;
  out.n_classes = boundaries.size() + 1;
  for (auto& y : out.labels) {
    if (y >= set.n_classes) throw Error(Errc::kUncoveredLabel, "label outside the class range");
    y = static_cast<std::uint32_t>(std::lower_bound(boundaries.begin(), boundaries.end(), y) -
                                   boundaries.begin());
  }
  return out;
}

LabeledSet Shuffled(const LabeledSet& set, Rng& rng) {
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return set.subset(idx);
}

std::vector<std::uint8_t> EncodeDataset(const LabeledSet& set) {
  set.validate();
  ByteWriter w;
  w.text("RLTD");
  w.u8(0x01);
  w.u32(static_cast<std::uint32_t>(set.n_classes));
  WriteTensor(w, set.inputs);
  w.u32(static_cast<std::uint32_t>(set.labels.size()));
  for (std::uint32_t y : set.labels) w.u32(y);
  return w.take();
}

LabeledSet DecodeDataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "RLTD") {
    throw Error(Errc::kBadMagic, "not an RLTD dataset");
  }
  if (r.u8() != 0x01) throw Error(Errc::kParseError, "unsupported dataset version");
  LabeledSet out;
  out.n_classes = r.u32();
  out.inputs = ReadTensor(r).as_matrix();
  const std::uint32_t count = r.u32();
  if (count != out.inputs.rows()) throw Error(Errc::kCountMismatch, "label count != rows");
  if (r.remaining() / 4 < count) throw Error(Errc::kTruncated, "label block truncated");
  out.labels.resize(count);
  for (auto& y : out.labels) y = r.u32();
  if (!r.done()) throw Error(Errc::kParseError, "trailing bytes after dataset");
  out.validate();
  return out;
}

void SaveDataset(const LabeledSet& set, const std::string& path) {
  WriteFileAtomic(path, EncodeDataset(set));
}

LabeledSet LoadDataset(const std::string& path) { return DecodeDataset(ReadFileBytes(path)); }

}  // namespace cosplit
