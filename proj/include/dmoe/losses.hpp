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
#include <span>
#include <string_view>
#include <vector>

#include "dmoe/matrix.hpp"

namespace dmoe {

enum class LossForm { None, Corr, CovL1, CovL2 };
enum class LossLocation { Input, Intermediate, Output };

std::string_view to_string(LossForm form);
std::string_view to_string(LossLocation location);
LossForm parse_loss_form(std::string_view name);
LossLocation parse_loss_location(std::string_view name);

struct LossConfig {
  LossForm form = LossForm::Corr;
  double alpha = 0.0;
  LossLocation location = LossLocation::Output;

  bool active() const { return form != LossForm::None && alpha > 0.0; }
  bool operator==(const LossConfig&) const = default;
};

// Probabilities are clipped to [kProbClip, 1 - kProbClip].
inline constexpr double kProbClip = 1e-7;

struct BceResult {
  double value = 0.0;
  std::vector<double> grad;  // dL/d(prob), already divided by |B|
};

// Mean binary cross-entropy.
BceResult bce(std::span<const double> probs, std::span<const std::uint8_t> labels);

struct PairLoss {
  double value = 0.0;
  Matrix grad_p;
  Matrix grad_q;
};

// (1/d^2) || Zp^T Zq ||_F with Z the unbiased column standardization.
PairLoss corr_loss_pair(const Matrix& p, const Matrix& q);

enum class CovNorm { L1, L2 };

// (1/d^2) || Cp^T Cq || with C the column-centered inputs and an entrywise norm.
PairLoss cov_loss_pair(const Matrix& p, const Matrix& q, CovNorm norm);

PairLoss pair_loss(const Matrix& p, const Matrix& q, LossForm form);

struct PairValue {
  std::size_t m1 = 0;
  std::size_t m2 = 0;
  double value = 0.0;
};

struct DecorrelationResult {
  double total = 0.0;
  std::vector<PairValue> pairs;  // (m1, m2) lexicographic, m1 < m2
  std::vector<Matrix> grads;     // one per input matrix
};

// Sum of the pair loss over all m1 < m2.
DecorrelationResult decorrelation_total(std::span<const Matrix> outputs, LossForm form);

// BCE + alpha * decor / (|B| - 1). Throws when the de-correlation term is
// active and the batch has fewer than two rows.
double total_objective(double bce_value, double decor_value, double alpha,
                       std::size_t batch_size, LossForm form = LossForm::Corr);

// alpha / (|B| - 1), or 0 when the term is inactive.
double decorrelation_scale(double alpha, std::size_t batch_size, LossForm form);

}  // namespace dmoe
