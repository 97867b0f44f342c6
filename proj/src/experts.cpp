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

#include "dmoe/experts.hpp"

#include <cmath>

#include "dmoe/numerics.hpp"

namespace dmoe {

std::string_view to_string(ExpertKind kind) {
  switch (kind) {
    case ExpertKind::Dnn: return "dnn";
    case ExpertKind::Fm: return "fm";
    case ExpertKind::CrossNet: return "crossnet";
    case ExpertKind::Cin: return "cin";
  }
  return "?";
}

ExpertKind parse_expert_kind(std::string_view name) {
  if (name == "dnn") return ExpertKind::Dnn;
  if (name == "fm") return ExpertKind::Fm;
  if (name == "crossnet" || name == "dcn") return ExpertKind::CrossNet;
  if (name == "cin") return ExpertKind::Cin;
  throw Error("unknown expert kind: " + std::string(name));
}

void ExpertConfig::validate() const {
  for (auto w : dnn_hidden)
    if (w < 1) throw Error("dnn hidden widths must be at least 1");
  if (kind == ExpertKind::Cin) {
    if (cin_maps.empty()) throw Error("cin needs at least one layer");
    for (auto w : cin_maps)
      if (w < 1) throw Error("cin feature-map widths must be at least 1");
  }
}

std::size_t raw_output_width(const ExpertConfig& config, std::size_t num_fields,
                             std::size_t embed_dim) {
  switch (config.kind) {
    case ExpertKind::Dnn:
      return config.dnn_hidden.empty() ? num_fields * embed_dim : config.dnn_hidden.back();
    case ExpertKind::Fm: return embed_dim;
    case ExpertKind::CrossNet: return num_fields * embed_dim;
    case ExpertKind::Cin: {
      std::size_t w = 0;
      for (auto h : config.cin_maps) w += h;
      return w;
    }
  }
  return 0;
}

void ExpertState::collect(std::vector<Matrix*>& params) {
  dnn.collect(params);
  for (auto& l : cross) l.collect(params);
  for (auto& w : cin) params.push_back(&w);
  align.collect(params);
}

ExpertState init_expert(const ExpertConfig& config, std::size_t num_fields, std::size_t embed_dim,
                        std::size_t output_dim, std::mt19937_64& rng) {
  config.validate();
  if (num_fields < 1 || embed_dim < 1) throw Error("expert needs at least one field and dim");
  ExpertState s;
  s.config = config;
  s.num_fields = num_fields;
  s.embed_dim = embed_dim;
  const std::size_t width = num_fields * embed_dim;
  switch (config.kind) {
    case ExpertKind::Dnn:
      s.dnn = init_mlp(width, config.dnn_hidden, /*rectify_output=*/true, rng);
      break;
    case ExpertKind::Fm: break;
    case ExpertKind::CrossNet:
      for (std::size_t l = 0; l < config.cross_layers; ++l) s.cross.push_back(init_dense(width, width, rng));
      break;
    case ExpertKind::Cin: {
      std::size_t prev = num_fields;
      for (std::size_t h : config.cin_maps) {
        Matrix w(h, prev * num_fields);
        const double bound = std::sqrt(6.0 / static_cast<double>(prev * num_fields + h));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& x : w.values()) x = dist(rng);
        s.cin.push_back(std::move(w));
        prev = h;
      }
      break;
    }
  }
  s.align = init_dense(raw_output_width(config, num_fields, embed_dim), output_dim, rng);
  return s;
}

namespace {

void check_input(const ExpertState& state, const Matrix& e) {
  if (e.cols() != state.input_width()) {
    throw Error("expert input width " + std::to_string(e.cols()) + " does not match " +
                std::to_string(state.input_width()));
  }
}

void check_kind(const ExpertState& state, ExpertKind kind) {
  if (state.config.kind != kind) {
    throw Error("expert kind mismatch: state is " + std::string(to_string(state.config.kind)));
  }
}

}  // namespace

Matrix dnn_forward(const ExpertState& state, const Matrix& e, ExpertCache* cache) {
  check_kind(state, ExpertKind::Dnn);
  check_input(state, e);
  return mlp_forward(state.dnn, e, cache ? &cache->dnn : nullptr);
}

Matrix fm_forward(const ExpertState& state, const Matrix& e, ExpertCache* /*cache*/) {
  check_kind(state, ExpertKind::Fm);
  check_input(state, e);
  const std::size_t f = state.num_fields;
  const std::size_t d = state.embed_dim;
  Matrix s(e.rows(), d);
  for (std::size_t b = 0; b < e.rows(); ++b) {
    auto row = e.row(b);
    for (std::size_t k = 0; k < d; ++k) {
      double total = 0.0;
      double squares = 0.0;
      for (std::size_t i = 0; i < f; ++i) {
        const double x = row[i * d + k];
        total += x;
        squares += x * x;
      }
      s(b, k) = 0.5 * (total * total - squares);
    }
  }
  return s;
}

Matrix crossnet_forward(const ExpertState& state, const Matrix& e, ExpertCache* cache) {
  check_kind(state, ExpertKind::CrossNet);
  check_input(state, e);
  if (cache) {
    cache->cross_states.assign(1, e);
    cache->cross_linear.clear();
  }
  Matrix x = e;
  for (const auto& layer : state.cross) {
    Matrix lin = dense_forward(layer, x);
    Matrix next = hadamard(e, lin);
    axpy(1.0, x, next);
    if (cache) {
      cache->cross_linear.push_back(std::move(lin));
      cache->cross_states.push_back(next);
    }
    x = std::move(next);
  }
  return x;
}

Matrix cin_forward(const ExpertState& state, const Matrix& e, ExpertCache* cache) {
  check_kind(state, ExpertKind::Cin);
  check_input(state, e);
  const std::size_t f = state.num_fields;
  const std::size_t d = state.embed_dim;
  const std::size_t n = e.rows();
  std::size_t total = 0;
  for (const auto& w : state.cin) total += w.rows();
  Matrix pooled(n, total);

  std::vector<Matrix> maps;
  maps.push_back(e);
  std::size_t offset = 0;
  for (const auto& w : state.cin) {
    const Matrix& prev = maps.back();
    const std::size_t h_prev = prev.cols() / d;
    const std::size_t h_next = w.rows();
    if (w.cols() != h_prev * f) throw Error("cin weight shape " + shape_string(w));
    Matrix next(n, h_next * d);
    for (std::size_t b = 0; b < n; ++b) {
      auto x0 = e.row(b);
      auto xp = prev.row(b);
      auto xn = next.row(b);
      for (std::size_t h = 0; h < h_next; ++h) {
        auto wrow = w.row(h);
        for (std::size_t i = 0; i < h_prev; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            const double wij = wrow[i * f + j];
            if (wij == 0.0) continue;
            for (std::size_t t = 0; t < d; ++t) xn[h * d + t] += wij * xp[i * d + t] * x0[j * d + t];
          }
        }
        double acc = 0.0;
        for (std::size_t t = 0; t < d; ++t) acc += xn[h * d + t];
        pooled(b, offset + h) = acc;
      }
    }
    offset += h_next;
    maps.push_back(std::move(next));
  }
  if (cache) cache->cin_maps = std::move(maps);
  return pooled;
}

Matrix align_forward(const Dense& head, const Matrix& raw, Matrix* pre) {
  Matrix p = dense_forward(head, raw);
  Matrix out = relu(p);
  if (pre) *pre = std::move(p);
  return out;
}

ExpertForward expert_forward(const ExpertState& state, const Matrix& e) {
  ExpertForward fwd;
  ExpertCache& c = fwd.cache;
  c.input = e;
  switch (state.config.kind) {
    case ExpertKind::Dnn: c.raw = dnn_forward(state, e, &c); break;
    case ExpertKind::Fm: c.raw = fm_forward(state, e, &c); break;
    case ExpertKind::CrossNet: c.raw = crossnet_forward(state, e, &c); break;
    case ExpertKind::Cin: c.raw = cin_forward(state, e, &c); break;
  }
  fwd.output = align_forward(state.align, c.raw, &c.align_pre);
  return fwd;
}

namespace {

Matrix fm_backward(const ExpertState& state, const Matrix& e, const Matrix& grad_raw) {
  const std::size_t f = state.num_fields;
  const std::size_t d = state.embed_dim;
  Matrix g(e.rows(), e.cols());
  for (std::size_t b = 0; b < e.rows(); ++b) {
    auto row = e.row(b);
    auto out = g.row(b);
    for (std::size_t k = 0; k < d; ++k) {
      double total = 0.0;
      for (std::size_t i = 0; i < f; ++i) total += row[i * d + k];
      for (std::size_t i = 0; i < f; ++i) out[i * d + k] = grad_raw(b, k) * (total - row[i * d + k]);
    }
  }
  return g;
}

Matrix crossnet_backward(const ExpertState& state, const ExpertCache& cache,
                         const Matrix& grad_raw, std::span<const Matrix> layer_grads,
                         ExpertState& grads) {
  const std::size_t layers = state.cross.size();
  if (cache.cross_states.size() != layers + 1) throw Error("crossnet cache does not match state");
  if (!layer_grads.empty() && layer_grads.size() != layers) {
    throw Error("crossnet layer gradient count mismatch");
  }
  const Matrix& x0 = cache.cross_states[0];
  Matrix grad_x0(x0.rows(), x0.cols());
  Matrix g = grad_raw;
  for (std::size_t l = layers; l-- > 0;) {
    if (!layer_grads.empty()) axpy(1.0, layer_grads[l], g);
    // x_{l+1} = x0 * u + x_l, u = x_l W + b
    axpy(1.0, hadamard(g, cache.cross_linear[l]), grad_x0);
    Matrix grad_u = hadamard(g, x0);
    Matrix grad_xl =
        dense_backward(state.cross[l], cache.cross_states[l], grad_u, grads.cross[l]);
    axpy(1.0, g, grad_xl);
    g = std::move(grad_xl);
  }
  axpy(1.0, g, grad_x0);
  return grad_x0;
}

Matrix cin_backward(const ExpertState& state, const ExpertCache& cache, const Matrix& grad_raw,
                    ExpertState& grads) {
  const std::size_t f = state.num_fields;
  const std::size_t d = state.embed_dim;
  const std::size_t layers = state.cin.size();
  if (cache.cin_maps.size() != layers + 1) throw Error("cin cache does not match state");
  const Matrix& x0 = cache.cin_maps[0];
  const std::size_t n = x0.rows();

  std::vector<std::size_t> offsets(layers, 0);
  for (std::size_t k = 1; k < layers; ++k) offsets[k] = offsets[k - 1] + state.cin[k - 1].rows();

  Matrix grad_x0(n, x0.cols());
  // Gradient flowing into X^k from deeper layers.
  Matrix carry;
  for (std::size_t k = layers; k-- > 0;) {
    const Matrix& w = state.cin[k];
    Matrix& gw = grads.cin[k];
    const Matrix& prev = cache.cin_maps[k];
    const std::size_t h_prev = prev.cols() / d;
    const std::size_t h_next = w.rows();
    Matrix grad_prev(n, prev.cols());
    for (std::size_t b = 0; b < n; ++b) {
      auto xp = prev.row(b);
      auto xz = x0.row(b);
      auto gp = grad_prev.row(b);
      auto g0 = grad_x0.row(b);
      for (std::size_t h = 0; h < h_next; ++h) {
        auto wrow = w.row(h);
        auto gwrow = gw.row(h);
        for (std::size_t t = 0; t < d; ++t) {
          double gz = grad_raw(b, offsets[k] + h);
          if (!carry.empty()) gz += carry(b, h * d + t);
          if (gz == 0.0) continue;
          for (std::size_t i = 0; i < h_prev; ++i) {
            const double xi = xp[i * d + t];
            for (std::size_t j = 0; j < f; ++j) {
              const double xj = xz[j * d + t];
              const double wij = wrow[i * f + j];
              gwrow[i * f + j] += gz * xi * xj;
              gp[i * d + t] += gz * wij * xj;
              g0[j * d + t] += gz * wij * xi;
            }
          }
        }
      }
    }
    carry = std::move(grad_prev);
  }
  // X^0 is both the first map and the fixed right operand of every layer.
  axpy(1.0, carry, grad_x0);
  return grad_x0;
}

}  // namespace

ExpertBackward expert_backward(const ExpertState& state, const ExpertCache& cache,
                               const Matrix& grad_output, std::span<const Matrix> layer_grads) {
  if (grad_output.rows() != cache.input.rows() || grad_output.cols() != state.output_width()) {
    throw Error("expert_backward: gradient shape " + shape_string(grad_output) +
                " does not match cached forward");
  }
  if (!layer_grads.empty() && state.config.kind != ExpertKind::CrossNet) {
    throw Error("layer gradients are only defined for crossnet experts");
  }
  ExpertBackward out{zeros_like(state), Matrix()};
  Matrix grad_pre = relu_backward(cache.align_pre, grad_output);
  Matrix grad_raw = dense_backward(state.align, cache.raw, grad_pre, out.grads.align);
  switch (state.config.kind) {
    case ExpertKind::Dnn:
      out.input_grad = mlp_backward(state.dnn, cache.dnn, grad_raw, out.grads.dnn);
      break;
    case ExpertKind::Fm: out.input_grad = fm_backward(state, cache.input, grad_raw); break;
    case ExpertKind::CrossNet:
      out.input_grad = crossnet_backward(state, cache, grad_raw, layer_grads, out.grads);
      break;
    case ExpertKind::Cin: out.input_grad = cin_backward(state, cache, grad_raw, out.grads); break;
  }
  return out;
}

}  // namespace dmoe
