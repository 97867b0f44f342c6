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
#include <string>
#include <string_view>
#include <vector>

#include "dmoe/layers.hpp"
#include "dmoe/matrix.hpp"

namespace dmoe {

enum class ExpertKind { Dnn, Fm, CrossNet, Cin };

std::string_view to_string(ExpertKind kind);
ExpertKind parse_expert_kind(std::string_view name);

struct ExpertConfig {
  ExpertKind kind = ExpertKind::CrossNet;
  std::vector<std::size_t> dnn_hidden = {500, 500, 500};
  std::size_t cross_layers = 3;
  std::vector<std::size_t> cin_maps = {276};

  void validate() const;
  bool operator==(const ExpertConfig&) const = default;
};

// Width of an expert's output before the alignment head.
std::size_t raw_output_width(const ExpertConfig& config, std::size_t num_fields,
                             std::size_t embed_dim);

// Parameters of one expert. Gradients use the same type.
struct ExpertState {
  ExpertConfig config;
  std::size_t num_fields = 0;
  std::size_t embed_dim = 0;
  Mlp dnn;                   // DNN: rectified hidden layers
  std::vector<Dense> cross;  // CrossNet: one D x D layer per cross step, D = F*d
  std::vector<Matrix> cin;   // CIN layer k: H_k x (H_{k-1} * F), column index i*F + j
  Dense align;               // alignment head, rectified

  std::size_t input_width() const { return num_fields * embed_dim; }
  std::size_t output_width() const { return align.out(); }
  void collect(std::vector<Matrix*>& params);
  bool operator==(const ExpertState&) const = default;
};

ExpertState init_expert(const ExpertConfig& config, std::size_t num_fields, std::size_t embed_dim,
                        std::size_t output_dim, std::mt19937_64& rng);

struct ExpertCache {
  Matrix input;
  MlpCache dnn;
  std::vector<Matrix> cross_states;  // x_0 .. x_L
  std::vector<Matrix> cross_linear;  // x_l W_l + b_l
  std::vector<Matrix> cin_maps;      // X^0 .. X^K, sample rows flattened as H_k x d
  Matrix raw;
  Matrix align_pre;
};

// Raw (pre-alignment) forward passes. E is |B| x F*d with field-major rows.
Matrix dnn_forward(const ExpertState& state, const Matrix& e, ExpertCache* cache = nullptr);
// Per-dimension second-order term s_k = 1/2((sum_i e_ik)^2 - sum_i e_ik^2).
Matrix fm_forward(const ExpertState& state, const Matrix& e, ExpertCache* cache = nullptr);
// x_{l+1} = x_0 * (x_l W_l + b_l) + x_l, elementwise product; returns x_L.
Matrix crossnet_forward(const ExpertState& state, const Matrix& e, ExpertCache* cache = nullptr);
// Sum-pooled CIN feature maps of every layer, concatenated.
Matrix cin_forward(const ExpertState& state, const Matrix& e, ExpertCache* cache = nullptr);

// relu(raw W + b)
Matrix align_forward(const Dense& head, const Matrix& raw, Matrix* pre = nullptr);

struct ExpertForward {
  Matrix output;  // |B| x d_out
  ExpertCache cache;
};

ExpertForward expert_forward(const ExpertState& state, const Matrix& e);

struct ExpertBackward {
  ExpertState grads;
  Matrix input_grad;  // dL/dE
};

// Adjoint of expert_forward. layer_grads optionally adds dL/dx_l for the
// CrossNet layer outputs x_1..x_L (one matrix per layer).
ExpertBackward expert_backward(const ExpertState& state, const ExpertCache& cache,
                               const Matrix& grad_output,
                               std::span<const Matrix> layer_grads = {});

}  // namespace dmoe
