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

#include "dmoe/gating.hpp"

#include "dmoe/numerics.hpp"

namespace dmoe {

GatingNetwork init_gating(std::size_t input_width, std::span<const std::size_t> hidden,
                          std::size_t num_experts, std::mt19937_64& rng) {
  if (num_experts < 1) throw Error("gating needs at least one expert");
  std::vector<std::size_t> widths(hidden.begin(), hidden.end());
  widths.push_back(num_experts);
  return GatingNetwork{init_mlp(input_width, widths, /*rectify_output=*/false, rng)};
}

Matrix gate_weights(const GatingNetwork& gn, const Matrix& gating_embedding, GateCache* cache) {
  if (gating_embedding.cols() != gn.mlp.in()) {
    throw Error("gating input width " + std::to_string(gating_embedding.cols()) +
                " does not match " + std::to_string(gn.mlp.in()));
  }
  Matrix logits = mlp_forward(gn.mlp, gating_embedding, cache ? &cache->mlp : nullptr);
  Matrix g = row_softmax(logits);
  if (cache) cache->weights = g;
  return g;
}

Matrix aggregate_experts(const Matrix& weights, std::span<const Matrix> outputs,
                         AggregateCache* cache) {
  if (outputs.size() != weights.cols()) {
    throw Error("aggregate_experts: " + std::to_string(outputs.size()) + " outputs for " +
                std::to_string(weights.cols()) + " gate columns");
  }
  if (outputs.empty()) throw Error("aggregate_experts: no experts");
  const Matrix& first = outputs.front();
  if (first.rows() != weights.rows()) throw Error("aggregate_experts: batch size mismatch");
  Matrix h(first.rows(), first.cols());
  for (std::size_t m = 0; m < outputs.size(); ++m) {
    require_same_shape(first, outputs[m], "aggregate_experts");
    for (std::size_t i = 0; i < h.rows(); ++i) {
      const double g = weights(i, m);
      auto src = outputs[m].row(i);
      auto dst = h.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g * src[j];
    }
  }
  if (cache) {
    cache->weights = weights;
    cache->outputs.assign(outputs.begin(), outputs.end());
  }
  return h;
}

GatingBackward gating_backward(const GatingNetwork& gn, const GateCache& gate_cache,
                               const AggregateCache& agg_cache, const Matrix& grad_h) {
  const Matrix& g = agg_cache.weights;
  if (g.cols() != agg_cache.outputs.size() || !g.same_shape(gate_cache.weights)) {
    throw Error("gating cache mismatch");
  }
  if (agg_cache.outputs.empty() || !grad_h.same_shape(agg_cache.outputs.front())) {
    throw Error("gating_backward: gradient shape " + shape_string(grad_h));
  }
  GatingBackward out{zeros_like(gn), Matrix(), {}};
  Matrix grad_g(g.rows(), g.cols());
  for (std::size_t m = 0; m < g.cols(); ++m) {
    const Matrix& o = agg_cache.outputs[m];
    Matrix grad_o(o.rows(), o.cols());
    for (std::size_t i = 0; i < o.rows(); ++i) {
      auto gh = grad_h.row(i);
      auto om = o.row(i);
      auto go = grad_o.row(i);
      double inner = 0.0;
      for (std::size_t j = 0; j < gh.size(); ++j) {
        inner += gh[j] * om[j];
        go[j] = g(i, m) * gh[j];
      }
      grad_g(i, m) = inner;
    }
    out.expert_output_grads.push_back(std::move(grad_o));
  }
  Matrix grad_logits = row_softmax_backward(g, grad_g);
  out.gating_embedding_grad = mlp_backward(gn.mlp, gate_cache.mlp, grad_logits, out.grads.mlp);
  return out;
}

}  // namespace dmoe
