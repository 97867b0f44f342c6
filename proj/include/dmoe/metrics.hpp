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
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dmoe/matrix.hpp"

namespace dmoe {

// R(X, Y) = Zx^T Zy / (N - 1) with unbiased standardization. Constant
// columns give zero rows/columns.
Matrix pearson_matrix(const Matrix& x, const Matrix& y);

// Cross-expert correlation: mean |r_ij| over the d1 x d2 Pearson matrix.
double cec(const Matrix& x, const Matrix& y);

// Probability that a random positive outscores a random negative; ties count 0.5.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct PairCec {
  std::size_t m1 = 0;
  std::size_t m2 = 0;
  double cec = 0.0;
  bool operator==(const PairCec&) const = default;
};

struct CorrelationReport {
  std::size_t num_experts = 0;
  Matrix pair_matrix;           // M x M, lower triangle (m2 > m1) holds CEC(m1, m2)
  std::vector<PairCec> pairs;   // m1 < m2, lexicographic
  std::vector<Matrix> pearson;  // per pair, when retained
  double sum = 0.0;

  double mean() const { return pairs.empty() ? 0.0 : sum / static_cast<double>(pairs.size()); }
  bool operator==(const CorrelationReport&) const = default;
};

CorrelationReport cec_report(std::span<const Matrix> expert_outputs,
                             bool keep_pearson = false);

// Header "m1,m2,cec", one row per pair.
void write_cec_csv(const std::filesystem::path& path, const CorrelationReport& report);

struct EvalMetrics {
  double auc = 0.5;
  double logloss = 0.0;
  std::size_t samples = 0;
  bool operator==(const EvalMetrics&) const = default;
};

}  // namespace dmoe
