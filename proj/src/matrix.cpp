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

#include "dmoe/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dmoe {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error("matrix data length does not match " + std::to_string(rows_) + "x" +
                std::to_string(cols_));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw Error("ragged row in Matrix::from_rows");
    std::copy(row.begin(), row.end(), m.row(i++).begin());
  }
  return m;
}

Matrix Matrix::column(std::initializer_list<double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                shape_string(b));
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error("matmul: shape mismatch " + shape_string(a) + " * " + shape_string(b));
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw Error("matmul_tn: shape mismatch " + shape_string(a) + "^T * " + shape_string(b));
  }
  Matrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* arow = a.row(r).data();
    const double* brow = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = arow[i];
      if (ari == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += ari * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error("matmul_nt: shape mismatch " + shape_string(a) + " * " + shape_string(b) + "^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  require_same_shape(x, y, "axpy");
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += alpha * xv[i];
}

Matrix scaled(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return out;
}

void add_row_broadcast(Matrix& m, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) {
    throw Error("add_row_broadcast: shape mismatch " + shape_string(m) + " + " +
                shape_string(row));
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += row(0, j);
  }
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out(0, j) += r[j];
  }
  return out;
}

double sum(const Matrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v;
  return s;
}

double dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return s;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(dot(m, m)); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::abs(av[i] - bv[i]));
  return worst;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix horizontal_concat(std::span<const Matrix> parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error("horizontal_concat: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    auto dst = out.row(i).begin();
    for (const auto& p : parts) dst = std::copy(p.row(i).begin(), p.row(i).end(), dst);
  }
  return out;
}

}  // namespace dmoe
