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
#include <functional>
#include <span>

#include "dmoe/matrix.hpp"

namespace dmoe {

// Softmax along each row, computed with the row maximum subtracted.
Matrix row_softmax(const Matrix& logits);

// Adjoint of row_softmax: given the softmax output and dL/d(softmax), returns dL/d(logits).
Matrix row_softmax_backward(const Matrix& probs, const Matrix& grad_probs);

struct Standardized {
  Matrix z;     // N x d
  Matrix mean;  // 1 x d
  Matrix std;   // 1 x d, unbiased (divide by N-1); 0 marks a constant column
};

// Columnwise (x - mean) / std with the unbiased standard deviation. Constant
// columns map to all-zero columns and report std = 0.
Standardized standardize_columns(const Matrix& x);

// Gradient of a scalar through standardize_columns. Constant columns receive zero.
Matrix standardize_backward(const Standardized& s, const Matrix& grad_z);

// Subtracts the column means.
Matrix center_columns(const Matrix& x);
// Adjoint of center_columns.
Matrix center_backward(const Matrix& grad_centered);

Matrix relu(const Matrix& x);
// grad * 1[pre > 0]
Matrix relu_backward(const Matrix& pre, const Matrix& grad);

double sigmoid(double x);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  bool passed = true;
};

using ScalarObjective = std::function<double(std::span<const double>)>;

// Compares an analytic gradient with central differences
// (f(x + h e_k) - f(x - h e_k)) / 2h, coordinate by coordinate. The per
// coordinate error is |fd - g| / max(1, |fd|, |g|).
GradCheckReport central_diff_gradcheck(const ScalarObjective& f, std::span<const double> x,
                                       std::span<const double> analytic, double h, double tol);

}  // namespace dmoe
