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

#include "fedamole/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "fedamole/error.hpp"

namespace fedamole {

namespace {

std::size_t Product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void RequireRank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected rank-2 tensor, got " +
                         t.ShapeString());
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(Product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (Product(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + ShapeString());
  }
}

Tensor Tensor::Matrix(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::Row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::Normal(std::size_t rows, std::size_t cols, double stddev,
                      Rng& rng) {
  Tensor t({rows, cols});
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

std::size_t Tensor::rows() const {
  RequireRank2(*this, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  RequireRank2(*this, "cols");
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!SameShape(other)) {
    throw DimensionError("add: shape " + ShapeString() + " vs " +
                         other.ShapeString());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Tensor::Norm() const { return std::sqrt(Dot(data_, data_)); }

std::string Tensor::ShapeString() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

Tensor Matmul(const Tensor& a, const Tensor& b) {
  RequireRank2(a, "matmul");
  RequireRank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + a.ShapeString() +
                         " x " + b.ShapeString());
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(p, j);
    }
  }
  return out;
}

Tensor MatmulNT(const Tensor& a, const Tensor& b) {
  RequireRank2(a, "matmul_nt");
  RequireRank2(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ " +
                         a.ShapeString() + " x " + b.ShapeString() + "^T");
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = Dot(ar, b.row(j));
  }
  return out;
}

Tensor Transpose(const Tensor& a) {
  RequireRank2(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor SoftmaxRows(const Tensor& x) {
  RequireRank2(x, "softmax_rows");
  Tensor out = x;
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = std::exp(x(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= z;
  }
  return out;
}

Tensor SoftmaxCols(const Tensor& x) {
  return Transpose(SoftmaxRows(Transpose(x)));
}

double NllTokenLoss(const Tensor& logits, std::span<const int> targets,
                    const std::vector<bool>& mask) {
  RequireRank2(logits, "nll_token_loss");
  const std::size_t t_len = logits.rows(), vocab = logits.cols();
  if (targets.size() != t_len || mask.size() != t_len) {
    throw DimensionError("nll_token_loss: targets/mask length mismatch");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (!mask[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab) {
      throw Error(ErrorKind::kInvalidArgument,
                  "nll_token_loss: target out of range");
    }
    double mx = -INFINITY;
    for (std::size_t j = 0; j < vocab; ++j) mx = std::max(mx, logits(t, j));
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(logits(t, j) - mx);
    total += std::log(z) + mx - logits(t, targets[t]);
    ++count;
  }
  if (count == 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "nll_token_loss: mask selects no response tokens");
  }
  return total / static_cast<double>(count);
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace fedamole
