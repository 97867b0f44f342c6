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
#include <random>
#include <span>
#include <vector>

#include "dmoe/matrix.hpp"

namespace dmoe {

// Affine map y = x W + b with W in x out and b 1 x out.
struct Dense {
  Matrix weight;
  Matrix bias;

  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
  void collect(std::vector<Matrix*>& params) {
    params.push_back(&weight);
    params.push_back(&bias);
  }
  bool operator==(const Dense&) const = default;
};

// Glorot-uniform weights, zero bias.
Dense init_dense(std::size_t in, std::size_t out, std::mt19937_64& rng);
Matrix dense_forward(const Dense& layer, const Matrix& x);
// Accumulates into grad (shaped like layer); returns dL/dx.
Matrix dense_backward(const Dense& layer, const Matrix& x, const Matrix& grad_y, Dense& grad);

// Stack of dense layers with rectifiers between them. The final layer is
// rectified only when rectify_output is set.
struct Mlp {
  std::vector<Dense> layers;
  bool rectify_output = false;

  std::size_t in() const { return layers.empty() ? 0 : layers.front().in(); }
  std::size_t out() const { return layers.empty() ? 0 : layers.back().out(); }
  void collect(std::vector<Matrix*>& params) {
    for (auto& l : layers) l.collect(params);
  }
  bool operator==(const Mlp&) const = default;
};

// widths lists every layer output, e.g. {500, 500, 1}.
Mlp init_mlp(std::size_t in, std::span<const std::size_t> widths, bool rectify_output,
             std::mt19937_64& rng);

struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
};

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache* cache = nullptr);
Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& grad_out, Mlp& grad);

// Copy of a parameter holder with every parameter zeroed.
template <typename T>
T zeros_like(const T& value) {
  T out = value;
  std::vector<Matrix*> params;
  out.collect(params);
  for (Matrix* p : params) p->fill(0.0);
  return out;
}

template <typename T>
std::size_t parameter_count(const T& value) {
  T copy = value;
  std::vector<Matrix*> params;
  copy.collect(params);
  std::size_t n = 0;
  for (const Matrix* p : params) n += p->size();
  return n;
}

}  // namespace dmoe
