// SPDX-License-Identifier: Apache-2.0
//
// Dense kernels and differentiable layers used by the encoder/decoder.
// Everything runs in double precision; gradients are derived by hand for the
// fixed architecture in model.hpp.
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace vdsh::math {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

// Sparse vector entry: (term id, value).
using SparseEntry = std::pair<std::uint32_t, double>;
using SparseVector = std::vector<SparseEntry>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = W x + b
void affine(const Matrix& w, std::span<const double> x, std::span<const double> b,
            std::span<double> y);
// y = W x + b for sparse x
void affine_sparse(const Matrix& w, const SparseVector& x, std::span<const double> b,
                   std::span<double> y);
// x_grad += W^T g
void add_transposed_product(const Matrix& w, std::span<const double> g,
                            std::span<double> x_grad);
// W_grad += scale * g x^T
void add_outer(std::span<const double> g, std::span<const double> x, double scale,
               Matrix& w_grad);
// W_grad += scale * g x^T for sparse x (only the touched columns)
void add_outer_sparse(std::span<const double> g, const SparseVector& x, double scale,
                      Matrix& w_grad);

Vector relu_forward(std::span<const double> x);
// Passes upstream where x > 0; the subgradient at exactly 0 is 0.
Vector relu_backward(std::span<const double> x, std::span<const double> upstream);

// Max-shifted log-softmax.
Vector log_softmax(std::span<const double> logits);

double logistic(double z);
// log(logistic(z)), finite for any finite z.
double log_logistic(double z);

// Inverted dropout: entries are 1/keep_prob with probability keep_prob, else 0.
// keep_prob == 1 yields an all-ones mask without consuming randomness.
Vector dropout_mask(std::size_t dim, double keep_prob, Rng& rng);

// Uniform(-a, a) entries with a = sqrt(6 / (rows + cols)).
Matrix glorot_init(std::size_t rows, std::size_t cols, Rng& rng);

Vector standard_normal(std::size_t dim, Rng& rng);

bool all_finite(std::span<const double> x);
// Throws DivergenceError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> x, std::string_view what);

// Neumaier compensated sum.
double compensated_sum(std::span<const double> x);

}  // namespace vdsh::math
