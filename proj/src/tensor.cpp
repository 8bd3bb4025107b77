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

#include "cosplit/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "cosplit/error.hpp"

namespace cosplit {
namespace {

std::size_t Product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void CheckShape(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw Error(Errc::kDimensionMismatch, "tensor rank must be 1 or 2");
  }
  for (std::size_t d : shape) {
    if (d == 0) throw Error(Errc::kDimensionMismatch, "tensor dimensions must be positive");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  CheckShape(shape_);
  data_.assign(Product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckShape(shape_);
  if (Product(shape_) != data_.size()) {
    throw Error(Errc::kDimensionMismatch, "data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_string());
  }
}

Tensor Tensor::Zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::Vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::FromRows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> data;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw Error(Errc::kDimensionMismatch, "ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > rows()) {
    throw Error(Errc::kIndexOutOfRange, "row slice out of range");
  }
  std::vector<double> out(data_.begin() + begin * cols(), data_.begin() + end * cols());
  return Tensor({end - begin, cols()}, std::move(out));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw Error(Errc::kIndexOutOfRange, "empty row gather");
  Tensor out({indices.size(), cols()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows()) throw Error(Errc::kIndexOutOfRange, "row index out of range");
    std::memcpy(out.row(i).data(), row(indices[i]).data(), cols() * sizeof(double));
  }
  return out;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::as_matrix() const {
  if (rank() == 2) return *this;
  return Tensor({1, cols()}, data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

bool BitwiseEqual(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw Error(Errc::kDimensionMismatch, "size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

std::uint64_t Fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t HashTensor(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t d : t.shape()) {
    const std::uint64_t d64 = d;
    h = Fnv1a({reinterpret_cast<const std::uint8_t*>(&d64), sizeof d64}, h);
  }
  return Fnv1a({reinterpret_cast<const std::uint8_t*>(t.data().data()), t.size() * sizeof(double)},
               h);
}

std::string HexDigest(std::uint64_t h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace cosplit
