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

#include "dmoe/layers.hpp"

#include <cmath>

#include "dmoe/numerics.hpp"

namespace dmoe {

Dense init_dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  if (in < 1 || out < 1) throw Error("dense layer widths must be at least 1");
  Dense d{Matrix(in, out), Matrix(1, out)};
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : d.weight.values()) w = dist(rng);
  return d;
}

Matrix dense_forward(const Dense& layer, const Matrix& x) {
  if (x.cols() != layer.in()) {
    throw Error("dense layer expects width " + std::to_string(layer.in()) + ", got " +
                shape_string(x));
  }
  Matrix y = matmul(x, layer.weight);
  add_row_broadcast(y, layer.bias);
  return y;
}

Matrix dense_backward(const Dense& layer, const Matrix& x, const Matrix& grad_y, Dense& grad) {
  axpy(1.0, matmul_tn(x, grad_y), grad.weight);
  axpy(1.0, column_sums(grad_y), grad.bias);
  return matmul_nt(grad_y, layer.weight);
}

Mlp init_mlp(std::size_t in, std::span<const std::size_t> widths, bool rectify_output,
             std::mt19937_64& rng) {
  Mlp mlp;
  mlp.rectify_output = rectify_output;
  std::size_t prev = in;
  for (std::size_t w : widths) {
    mlp.layers.push_back(init_dense(prev, w, rng));
    prev = w;
  }
  return mlp;
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, MlpCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix h = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    Matrix pre = dense_forward(mlp.layers[l], h);
    const bool last = l + 1 == mlp.layers.size();
    Matrix act = (!last || mlp.rectify_output) ? relu(pre) : pre;
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(std::move(pre));
    }
    h = std::move(act);
  }
  return h;
}

Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& grad_out, Mlp& grad) {
  if (cache.pre.size() != mlp.layers.size()) throw Error("mlp cache does not match network");
  Matrix g = grad_out;
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    const bool last = l + 1 == mlp.layers.size();
    if (!last || mlp.rectify_output) g = relu_backward(cache.pre[l], g);
    g = dense_backward(mlp.layers[l], cache.inputs[l], g, grad.layers[l]);
  }
  return g;
}

}  // namespace dmoe
