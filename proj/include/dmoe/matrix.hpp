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

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmoe {

// Library-wide error type. Messages are part of the public contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::initializer_list<double> values);

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
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

// Throws Error("<what>: shape mismatch ...") unless a and b share a shape.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix transpose(const Matrix& a);

// y += alpha * x
void axpy(double alpha, const Matrix& x, Matrix& y);
Matrix scaled(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Adds a 1 x cols row vector to every row.
void add_row_broadcast(Matrix& m, const Matrix& row);
// 1 x cols matrix of column sums.
Matrix column_sums(const Matrix& m);

double sum(const Matrix& m);
double dot(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);

Matrix horizontal_concat(std::span<const Matrix> parts);

}  // namespace dmoe
