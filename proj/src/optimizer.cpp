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

#include "dmoe/optimizer.hpp"

#include <cmath>

namespace dmoe {

AdamState make_adam_state(std::span<Matrix* const> params) {
  AdamState s;
  for (const Matrix* p : params) {
    s.first.emplace_back(p->rows(), p->cols());
    s.second.emplace_back(p->rows(), p->cols());
  }
  return s;
}

namespace {

struct BiasCorrection {
  double first;
  double second;
};

BiasCorrection bias_correction(const AdamConfig& c, std::uint64_t t) {
  const double td = static_cast<double>(t);
  return {1.0 - std::pow(c.beta1, td), 1.0 - std::pow(c.beta2, td)};
}

void update_span(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamConfig& c, BiasCorrection bc) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] / bc.first;
    const double v_hat = v[i] / bc.second;
    param[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state, const AdamConfig& config) {
  if (params.size() != grads.size() || params.size() != state.first.size()) {
    throw Error("adam_step: parameter, gradient and state counts differ");
  }
  if (!(config.learning_rate > 0.0)) throw Error("learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], *grads[i], "adam_step");
    if (!all_finite(*grads[i])) throw Error("non-finite gradient");
  }
  ++state.step;
  const BiasCorrection bc = bias_correction(config, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    update_span(params[i]->values(), grads[i]->values(), state.first[i].values(),
                state.second[i].values(), config, bc);
  }
}

ModelOptimizer::TableMoments ModelOptimizer::make_table_moments(const EmbeddingTable& table) {
  TableMoments tm;
  for (const auto& f : table.fields) {
    tm.first.emplace_back(f.rows(), f.cols());
    tm.second.emplace_back(f.rows(), f.cols());
  }
  return tm;
}

ModelOptimizer::ModelOptimizer(ModelBundle& model, AdamConfig config) : config_(config) {
  std::vector<Matrix*> params;
  model.collect_dense(params);
  dense_ = make_adam_state(params);
  for (const auto& t : model.bank.tables) tables_.push_back(make_table_moments(t));
  gating_ = make_table_moments(model.bank.gating);
}

void ModelOptimizer::update_table(EmbeddingTable& table, TableMoments& moments,
                                  const SparseGrad& grads) {
  const BiasCorrection bc = bias_correction(config_, dense_.step);
  apply_sparse_grads(table, grads,
                     [&](std::size_t field, std::size_t row, std::span<double> param,
                         std::span<const double> grad) {
                       update_span(param, grad, moments.first[field].row(row),
                                   moments.second[field].row(row), config_, bc);
                     });
}

void ModelOptimizer::step(ModelBundle& model, ModelGradients& grads) {
  if (grads.tables.size() != model.bank.tables.size()) {
    throw Error("gradient table count does not match the embedding bank");
  }
  auto check_sparse = [](const SparseGrad& sg) {
    for (const auto& e : sg.entries)
      for (double v : e.grad)
        if (!std::isfinite(v)) throw Error("non-finite gradient");
  };
  for (const auto& sg : grads.tables) check_sparse(sg);
  check_sparse(grads.gating);

  std::vector<Matrix*> params;
  std::vector<Matrix*> grad_ptrs;
  model.collect_dense(params);
  grads.collect_dense(grad_ptrs);
  std::vector<const Matrix*> const_grads(grad_ptrs.begin(), grad_ptrs.end());
  adam_step(params, const_grads, dense_, config_);
  for (std::size_t t = 0; t < model.bank.tables.size(); ++t) {
    update_table(model.bank.tables[t], tables_[t], grads.tables[t]);
  }
  update_table(model.bank.gating, gating_, grads.gating);
}

}  // namespace dmoe
