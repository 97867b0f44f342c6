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

#include "dmoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dmoe/numerics.hpp"

namespace dmoe {

Matrix pearson_matrix(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw Error("pearson_matrix: row counts differ");
  if (x.rows() < 2) throw Error("insufficient rows for std");
  const Standardized sx = standardize_columns(x);
  const Standardized sy = standardize_columns(y);
  Matrix r = matmul_tn(sx.z, sy.z);
  const double inv = 1.0 / static_cast<double>(x.rows() - 1);
  for (double& v : r.values()) v = std::clamp(v * inv, -1.0, 1.0);
  return r;
}

namespace {

// Sorted so that cec(x, y) and cec(y, x) agree to the last bit.
double mean_abs(const Matrix& r) {
  if (r.empty()) return 0.0;
  std::vector<double> a(r.values().begin(), r.values().end());
  for (double& v : a) v = std::abs(v);
  std::sort(a.begin(), a.end());
  double s = 0.0;
  for (double v : a) s += v;
  return s / static_cast<double>(a.size());
}

}  // namespace

double cec(const Matrix& x, const Matrix& y) { return mean_abs(pearson_matrix(x, y)); }

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw Error("auc: score and label counts differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Walk tie groups in ascending score order. Each positive beats every
  // negative seen in earlier groups and ties half of those in its own group.
  // Counts stay integral (doubled) so the result is the exact ratio.
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
  std::uint64_t twice_wins = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t group_pos = 0;
    std::uint64_t group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) {
        ++group_pos;
      } else if (labels[order[j]] == 0) {
        ++group_neg;
      } else {
        throw Error("auc: labels must be 0 or 1");
      }
      ++j;
    }
    twice_wins += group_pos * (2 * neg + group_neg);
    pos += group_pos;
    neg += group_neg;
    i = j;
  }
  if (pos == 0 || neg == 0) throw Error("AUC undefined");
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

CorrelationReport cec_report(std::span<const Matrix> expert_outputs, bool keep_pearson) {
  const std::size_t m = expert_outputs.size();
  if (m < 2) throw Error("cec_report needs at least 2 experts");
  for (const auto& o : expert_outputs) require_same_shape(expert_outputs.front(), o, "cec_report");
  CorrelationReport rep;
  rep.num_experts = m;
  rep.pair_matrix = Matrix(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      Matrix r = pearson_matrix(expert_outputs[a], expert_outputs[b]);
      const double value = mean_abs(r);
      rep.pairs.push_back({a, b, value});
      rep.pair_matrix(b, a) = value;
      rep.sum += value;
      if (keep_pearson) rep.pearson.push_back(std::move(r));
    }
  }
  return rep;
}

void write_cec_csv(const std::filesystem::path& path, const CorrelationReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "m1,m2,cec\n";
  char buf[64];
  for (const auto& p : report.pairs) {
    std::snprintf(buf, sizeof buf, "%.17g", p.cec);
    out << p.m1 << ',' << p.m2 << ',' << buf << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace dmoe
