// SPDX-License-Identifier: Apache-2.0
#include "vdsh/mathcore.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

#include "vdsh/errors.hpp"

namespace vdsh::math {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void affine(const Matrix& w, std::span<const double> x, std::span<const double> b,
            std::span<double> y) {
  assert(x.size() == w.cols() && y.size() == w.rows() && b.size() == w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto wr = w.row(r);
    double acc = b[r];
    for (std::size_t c = 0; c < wr.size(); ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void affine_sparse(const Matrix& w, const SparseVector& x, std::span<const double> b,
                   std::span<double> y) {
  assert(y.size() == w.rows() && b.size() == w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto wr = w.row(r);
    double acc = b[r];
    for (const auto& [col, value] : x) acc += wr[col] * value;
    y[r] = acc;
  }
}

void add_transposed_product(const Matrix& w, std::span<const double> g,
                            std::span<double> x_grad) {
  assert(g.size() == w.rows() && x_grad.size() == w.cols());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const auto wr = w.row(r);
    for (std::size_t c = 0; c < wr.size(); ++c) x_grad[c] += wr[c] * gr;
  }
}

void add_outer(std::span<const double> g, std::span<const double> x, double scale,
               Matrix& w_grad) {
  assert(g.size() == w_grad.rows() && x.size() == w_grad.cols());
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double gr = g[r] * scale;
    if (gr == 0.0) continue;
    auto wr = w_grad.row(r);
    for (std::size_t c = 0; c < wr.size(); ++c) wr[c] += gr * x[c];
  }
}

void add_outer_sparse(std::span<const double> g, const SparseVector& x, double scale,
                      Matrix& w_grad) {
  assert(g.size() == w_grad.rows());
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double gr = g[r] * scale;
    if (gr == 0.0) continue;
    auto wr = w_grad.row(r);
    for (const auto& [col, value] : x) wr[col] += gr * value;
  }
}

Vector relu_forward(std::span<const double> x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Vector relu_backward(std::span<const double> x, std::span<const double> upstream) {
  assert(x.size() == upstream.size());
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? upstream[i] : 0.0;
  return out;
}

Vector log_softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double log_norm = peak + std::log(total);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_logistic(double z) {
  // log sigma(z) = -log(1 + e^{-z})
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

Vector dropout_mask(std::size_t dim, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0) || keep_prob > 1.0) {
    throw ConfigError("dropout keep probability must be in (0, 1], got " +
                      std::to_string(keep_prob));
  }
  Vector mask(dim, 1.0);
  if (keep_prob == 1.0) return mask;
  std::bernoulli_distribution keep(keep_prob);
  const double scale = 1.0 / keep_prob;
  for (auto& m : mask) m = keep(rng) ? scale : 0.0;
  return mask;
}

Matrix glorot_init(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

Vector standard_normal(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(dim);
  for (auto& v : out) v = normal(rng);
  return out;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(std::span<const double> x, std::string_view what) {
  if (!all_finite(x)) throw DivergenceError("non-finite values in " + std::string(what));
}

double compensated_sum(std::span<const double> x) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : x) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

}  // namespace vdsh::math
