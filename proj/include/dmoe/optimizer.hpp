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
#include <vector>

#include "dmoe/matrix.hpp"
#include "dmoe/model.hpp"

namespace dmoe {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

// Moment accumulators shaped like their parameters, plus the shared step count.
struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::uint64_t step = 0;
};

AdamState make_adam_state(std::span<Matrix* const> params);

// Bias-corrected Adam update of every parameter; increments state.step once.
// Gradients are validated before any parameter changes.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state, const AdamConfig& config);

// Adam over a whole ModelBundle. Embedding tables are updated lazily: only
// rows that received a gradient move, using the shared step count.
class ModelOptimizer {
 public:
  ModelOptimizer(ModelBundle& model, AdamConfig config);

  void step(ModelBundle& model, ModelGradients& grads);
  std::uint64_t steps() const { return dense_.step; }
  const AdamConfig& config() const { return config_; }

 private:
  struct TableMoments {
    std::vector<Matrix> first;
    std::vector<Matrix> second;
  };
  TableMoments make_table_moments(const EmbeddingTable& table);
  void update_table(EmbeddingTable& table, TableMoments& moments, const SparseGrad& grads);

  AdamConfig config_;
  AdamState dense_;
  std::vector<TableMoments> tables_;
  TableMoments gating_;
};

}  // namespace dmoe
