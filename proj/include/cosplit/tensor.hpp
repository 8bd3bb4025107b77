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

#ifndef COSPLIT_TENSOR_HPP_
#define COSPLIT_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cosplit {

// Dense row-major array of doubles, rank 1 or 2. A rank-1 tensor behaves as a
// single row wherever a batch is expected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor Zeros(std::size_t rows, std::size_t cols);
  static Tensor Vector(std::vector<double> values);
  static Tensor FromRows(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  // Rows [begin, end) as a new rank-2 tensor.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  Tensor gather_rows(std::span<const std::size_t> indices) const;
  // Same data viewed as rows x cols.
  Tensor reshaped(std::vector<std::size_t> shape) const;
  // Rank-2 view of the same data (rank-1 becomes 1 x n).
  Tensor as_matrix() const;

  bool all_finite() const;
  double max_abs() const;

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Bit-for-bit comparison of shapes and values (distinguishes -0.0 and NaN payloads).
bool BitwiseEqual(const Tensor& a, const Tensor& b);
double MaxAbsDiff(const Tensor& a, const Tensor& b);

// 64-bit FNV-1a over raw bytes; used for checkpoint and calibration digests.
std::uint64_t Fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t HashTensor(const Tensor& t);
std::string HexDigest(std::uint64_t h);

}  // namespace cosplit

#endif  // COSPLIT_TENSOR_HPP_
