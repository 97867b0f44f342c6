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

#include "dmoe/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dmoe/numerics.hpp"

namespace dmoe {

std::string_view to_string(LossForm form) {
  switch (form) {
    case LossForm::None: return "none";
    case LossForm::Corr: return "corr";
    case LossForm::CovL1: return "cov_l1";
    case LossForm::CovL2: return "cov_l2";
  }
  return "?";
}

std::string_view to_string(LossLocation location) {
  switch (location) {
    case LossLocation::Input: return "input";
    case LossLocation::Intermediate: return "intermediate";
    case LossLocation::Output: return "output";
  }
  return "?";
}

LossForm parse_loss_form(std::string_view name) {
  if (name == "none") return LossForm::None;
  if (name == "corr") return LossForm::Corr;
  if (name == "cov_l1" || name == "covl1") return LossForm::CovL1;
  if (name == "cov_l2" || name == "covl2") return LossForm::CovL2;
  throw Error("unknown loss form: " + std::string(name));
}

LossLocation parse_loss_location(std::string_view name) {
  if (name == "input") return LossLocation::Input;
  if (name == "intermediate") return LossLocation::Intermediate;
  if (name == "output") return LossLocation::Output;
  throw Error("unknown loss location: " + std::string(name));
}

BceResult bce(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  if (probs.size() != labels.size()) throw Error("bce: prediction and label counts differ");
  if (probs.empty()) throw Error("bce: empty batch");
  const double n = static_cast<double>(probs.size());
  BceResult r;
  r.grad.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double raw = probs[i];
    const double p = std::clamp(raw, kProbClip, 1.0 - kProbClip);
    const bool clipped = p != raw;
    if (labels[i] == 1) {
      r.value -= std::log(p);
      r.grad[i] = clipped ? 0.0 : -1.0 / (p * n);
    } else if (labels[i] == 0) {
      r.value -= std::log(1.0 - p);
      r.grad[i] = clipped ? 0.0 : 1.0 / ((1.0 - p) * n);
    } else {
      throw Error("bce: labels must be 0 or 1");
    }
  }
  r.value /= n;
  return r;
}

namespace {

// Value and dL/dC for (1/d^2) * ||C|| under the chosen entrywise norm.
double norm_and_grad(const Matrix& c, bool l1, double scale, Matrix& grad_c) {
  grad_c = Matrix(c.rows(), c.cols());
  if (l1) {
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double v = c.values()[i];
      s += std::abs(v);
      grad_c.values()[i] = v > 0.0 ? scale : (v < 0.0 ? -scale : 0.0);
    }
    return scale * s;
  }
  const double norm = frobenius_norm(c);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < c.size(); ++i) grad_c.values()[i] = scale * c.values()[i] / norm;
  }
  return scale * norm;
}

void check_pair(const Matrix& p, const Matrix& q) {
  require_same_shape(p, q, "pair loss");
  if (p.cols() == 0) throw Error("pair loss: zero-width outputs");
}

}  // namespace

PairLoss corr_loss_pair(const Matrix& p, const Matrix& q) {
  check_pair(p, q);
  if (p.rows() < 2) throw Error("insufficient rows for std");
  const Standardized sp = standardize_columns(p);
  const Standardized sq = standardize_columns(q);
  const Matrix c = matmul_tn(sp.z, sq.z);
  const double d = static_cast<double>(p.cols());
  Matrix grad_c;
  PairLoss out;
  out.value = norm_and_grad(c, /*l1=*/false, 1.0 / (d * d), grad_c);
  // C = Zp^T Zq  =>  dZp = Zq dC^T, dZq = Zp dC
  out.grad_p = standardize_backward(sp, matmul_nt(sq.z, grad_c));
  out.grad_q = standardize_backward(sq, matmul(sp.z, grad_c));
  return out;
}

PairLoss cov_loss_pair(const Matrix& p, const Matrix& q, CovNorm norm) {
  check_pair(p, q);
  if (p.rows() < 1) throw Error("cov loss: empty batch");
  const Matrix cp = center_columns(p);
  const Matrix cq = center_columns(q);
  const Matrix c = matmul_tn(cp, cq);
  const double d = static_cast<double>(p.cols());
  Matrix grad_c;
  PairLoss out;
  out.value = norm_and_grad(c, norm == CovNorm::L1, 1.0 / (d * d), grad_c);
  out.grad_p = center_backward(matmul_nt(cq, grad_c));
  out.grad_q = center_backward(matmul(cp, grad_c));
  return out;
}

PairLoss pair_loss(const Matrix& p, const Matrix& q, LossForm form) {
  switch (form) {
    case LossForm::Corr: return corr_loss_pair(p, q);
    case LossForm::CovL1: return cov_loss_pair(p, q, CovNorm::L1);
    case LossForm::CovL2: return cov_loss_pair(p, q, CovNorm::L2);
    case LossForm::None: break;
  }
  require_same_shape(p, q, "pair loss");
  return PairLoss{0.0, Matrix(p.rows(), p.cols()), Matrix(q.rows(), q.cols())};
}

DecorrelationResult decorrelation_total(std::span<const Matrix> outputs, LossForm form) {
  if (outputs.empty()) throw Error("decorrelation needs at least one expert output");
  DecorrelationResult r;
  for (const auto& o : outputs) r.grads.emplace_back(o.rows(), o.cols());
  if (form == LossForm::None) return r;
  for (std::size_t a = 0; a < outputs.size(); ++a) {
    for (std::size_t b = a + 1; b < outputs.size(); ++b) {
      PairLoss pl = pair_loss(outputs[a], outputs[b], form);
      r.total += pl.value;
      r.pairs.push_back({a, b, pl.value});
      axpy(1.0, pl.grad_p, r.grads[a]);
      axpy(1.0, pl.grad_q, r.grads[b]);
    }
  }
  return r;
}

double decorrelation_scale(double alpha, std::size_t batch_size, LossForm form) {
  if (form == LossForm::None || alpha == 0.0) return 0.0;
  if (alpha < 0.0) throw Error("alpha must be non-negative");
  if (batch_size < 2) throw Error("batch too small for de-correlation");
  return alpha / static_cast<double>(batch_size - 1);
}

double total_objective(double bce_value, double decor_value, double alpha,
                       std::size_t batch_size, LossForm form) {
  return bce_value + decorrelation_scale(alpha, batch_size, form) * decor_value;
}

}  // namespace dmoe
