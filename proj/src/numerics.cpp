/* Copyright 2026 The D-MoE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "dmoe/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dmoe {

namespace {

// Relative threshold under which a column's spread is treated as rounding noise.
constexpr double kConstantColumnTol = 1e-12;

}  // namespace

Matrix row_softmax(const Matrix& logits) {
  if (logits.rows() == 0 || logits.cols() == 0) throw Error("empty input");
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

Matrix row_softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  require_same_shape(probs, grad_probs, "row_softmax_backward");
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto p = probs.row(i);
    auto g = grad_probs.row(i);
    double inner = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) inner += p[j] * g[j];
    auto o = out.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) o[j] = p[j] * (g[j] - inner);
  }
  return out;
}

Standardized standardize_columns(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n < 2) throw Error("insufficient rows for std");
  Standardized s{Matrix(n, d), Matrix(1, d), Matrix(1, d)};
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    double max_abs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean += x(i, j);
      max_abs = std::max(max_abs, std::abs(x(i, j)));
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = x(i, j) - mean;
      ss += c * c;
    }
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    s.mean(0, j) = mean;
    if (sd <= kConstantColumnTol * max_abs) sd = 0.0;
    s.std(0, j) = sd;
    if (sd == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) s.z(i, j) = (x(i, j) - mean) / sd;
  }
  return s;
}

Matrix standardize_backward(const Standardized& s, const Matrix& grad_z) {
  require_same_shape(s.z, grad_z, "standardize_backward");
  const std::size_t n = s.z.rows();
  const std::size_t d = s.z.cols();
  const double nn = static_cast<double>(n);
  Matrix out(n, d);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = s.std(0, j);
    if (sd == 0.0) continue;
    double g_mean = 0.0;
    double gz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g_mean += grad_z(i, j);
      gz += grad_z(i, j) * s.z(i, j);
    }
    g_mean /= nn;
    gz /= (nn - 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      out(i, j) = (grad_z(i, j) - g_mean - s.z(i, j) * gz) / sd;
    }
  }
  return out;
}

Matrix center_columns(const Matrix& x) {
  Matrix out = x;
  if (x.rows() == 0) return out;
  Matrix means = scaled(column_sums(x), -1.0 / static_cast<double>(x.rows()));
  add_row_broadcast(out, means);
  return out;
}

Matrix center_backward(const Matrix& grad_centered) { return center_columns(grad_centered); }

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix relu_backward(const Matrix& pre, const Matrix& grad) {
  require_same_shape(pre, grad, "relu_backward");
  Matrix out = grad;
  auto p = pre.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i)
    if (p[i] <= 0.0) o[i] = 0.0;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

GradCheckReport central_diff_gradcheck(const ScalarObjective& f, std::span<const double> x,
                                       std::span<const double> analytic, double h, double tol) {
  if (!(h > 0.0)) throw Error("gradcheck step must be positive");
  if (x.size() != analytic.size()) throw Error("gradcheck: gradient length mismatch");
  std::vector<double> probe(x.begin(), x.end());
  GradCheckReport report;
  report.passed = true;
  auto eval = [&f](std::span<const double> at) {
    const double v = f(at);
    if (!std::isfinite(v)) throw Error("objective not finite");
    return v;
  };
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double up = eval(probe);
    probe[k] = orig - h;
    const double down = eval(probe);
    probe[k] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double g = analytic[k];
    const double err = std::abs(fd - g) / std::max({1.0, std::abs(fd), std::abs(g)});
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_coordinate = k;
    }
  }
  report.passed = report.max_relative_error < tol;
  return report;
}

}  // namespace dmoe
