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
#include <random>
#include <span>
#include <vector>

#include "dmoe/layers.hpp"
#include "dmoe/matrix.hpp"

namespace dmoe {

// Gate MLP mapping the gating embedding to one logit per expert.
struct GatingNetwork {
  Mlp mlp;

  std::size_t num_experts() const { return mlp.out(); }
  void collect(std::vector<Matrix*>& params) { mlp.collect(params); }
  bool operator==(const GatingNetwork&) const = default;
};

// hidden widths are rectified; the final width is num_experts and linear.
GatingNetwork init_gating(std::size_t input_width, std::span<const std::size_t> hidden,
                          std::size_t num_experts, std::mt19937_64& rng);

struct GateCache {
  MlpCache mlp;
  Matrix weights;  // |B| x M
};

// softmax(MLP(ge)) rowwise.
Matrix gate_weights(const GatingNetwork& gn, const Matrix& gating_embedding,
                    GateCache* cache = nullptr);

struct AggregateCache {
  Matrix weights;
  std::vector<Matrix> outputs;
};

// h_i = sum_m g_im * o^(m)_i
Matrix aggregate_experts(const Matrix& weights, std::span<const Matrix> outputs,
                         AggregateCache* cache = nullptr);

struct GatingBackward {
  GatingNetwork grads;
  Matrix gating_embedding_grad;
  std::vector<Matrix> expert_output_grads;
};

GatingBackward gating_backward(const GatingNetwork& gn, const GateCache& gate_cache,
                               const AggregateCache& agg_cache, const Matrix& grad_h);

}  // namespace dmoe
