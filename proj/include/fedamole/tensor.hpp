// Copyright 2026 The fedamole Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "fedamole/rng.hpp"

namespace fedamole {

// Dense row-major array of doubles. Most kernels operate on rank-2 tensors;
// vectors are represented as 1 x n rows.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor Matrix(
      std::initializer_list<std::initializer_list<double>> rows);
  static Tensor Row(std::vector<double> values);
  static Tensor Zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }
  static Tensor Normal(std::size_t rows, std::size_t cols, double stddev,
                       Rng& rng);

  [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  // Rank-2 accessors; throw DimensionError on other ranks.
  [[nodiscard]] std::size_t rows() const;
  [[nodiscard]] std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * shape_[1] + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const;

  void Fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  [[nodiscard]] bool SameShape(const Tensor& other) const {
    return shape_ == other.shape_;
  }
  [[nodiscard]] bool AllFinite() const;
  [[nodiscard]] double Norm() const;
  [[nodiscard]] std::string ShapeString() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Plain (untaped) kernels.
Tensor Matmul(const Tensor& a, const Tensor& b);
// a * b^T, the layout used by every [out x in] weight in this project.
Tensor MatmulNT(const Tensor& a, const Tensor& b);
Tensor Transpose(const Tensor& a);
Tensor SoftmaxRows(const Tensor& x);
// Softmax down each column (normalizes over rows).
Tensor SoftmaxCols(const Tensor& x);

// Mean over positions with mask[t] of -log softmax(logits[t])[targets[t]].
double NllTokenLoss(const Tensor& logits, std::span<const int> targets,
                    const std::vector<bool>& mask);

double Dot(std::span<const double> a, std::span<const double> b);

}  // namespace fedamole
