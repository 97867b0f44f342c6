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
#include <string>
#include <vector>

#include "dmoe/data.hpp"
#include "dmoe/embedding.hpp"
#include "dmoe/experts.hpp"
#include "dmoe/gating.hpp"
#include "dmoe/layers.hpp"
#include "dmoe/losses.hpp"

namespace dmoe {

struct ModelConfig {
  DatasetSchema schema;
  EmbeddingMode mode = EmbeddingMode::Multi;
  std::vector<ExpertConfig> experts;
  std::size_t embed_dim = 16;
  std::size_t gate_embed_dim = 16;
  std::size_t expert_output_dim = 16;
  std::vector<std::size_t> gate_hidden = {64};
  std::vector<std::size_t> tower_hidden = {500};
  LossConfig loss;
  std::uint64_t seed = 42;

  std::size_t num_experts() const { return experts.size(); }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// All trainable state of a D-MoE model.
struct ModelBundle {
  ModelConfig config;
  EmbeddingBank bank;
  std::vector<ExpertState> experts;
  GatingNetwork gate;
  Mlp tower;  // final width 1, linear; sigmoid applied on top

  // Expert, gate and tower parameters in a fixed order.
  void collect_dense(std::vector<Matrix*>& params);
  std::size_t parameter_count() const;
  bool operator==(const ModelBundle&) const = default;
};

ModelBundle build_model(const ModelConfig& config);

// Closed-form parameter count from the configuration shapes alone.
std::size_t expected_parameter_count(const ModelConfig& config);

struct ForwardPass {
  std::vector<Matrix> embeddings;       // e^(m), one per expert
  Matrix gating_embedding;
  std::vector<ExpertForward> experts;   // aligned outputs O^(m) and caches
  GateCache gate;
  AggregateCache aggregate;
  Matrix h;
  MlpCache tower;
  Matrix logits;                        // |B| x 1
  std::vector<double> probs;

  std::vector<Matrix> expert_outputs() const;
};

ForwardPass forward_full(const ModelBundle& model, const EncodedDataset& ds, const Batch& batch);

// Matrices the de-correlation loss sees for the configured location, grouped
// per application site (one group for input/output, one per cross layer for
// intermediate). Each group holds one matrix per expert.
std::vector<std::vector<Matrix>> decorrelation_sites(const ForwardPass& fwd, LossLocation location);

struct StepLosses {
  double objective = 0.0;
  double bce = 0.0;
  double decorrelation = 0.0;  // unscaled sum over pairs (and sites)
};

struct ModelGradients {
  std::vector<ExpertState> experts;
  GatingNetwork gate;
  Mlp tower;
  std::vector<SparseGrad> tables;  // one per bank table
  SparseGrad gating;

  void collect_dense(std::vector<Matrix*>& params);
};

struct GradientResult {
  StepLosses losses;
  ModelGradients grads;
};

// Objective value without gradients.
StepLosses evaluate_objective(const ModelBundle& model, const EncodedDataset& ds,
                              const Batch& batch);

// Objective value and full gradient for one batch.
GradientResult compute_gradients(const ModelBundle& model, const EncodedDataset& ds,
                                 const Batch& batch);

}  // namespace dmoe
