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

#include "dmoe/model.hpp"

#include <random>

#include "dmoe/numerics.hpp"

namespace dmoe {

void ModelConfig::validate() const {
  schema.validate();
  if (experts.empty()) throw Error("expert list is empty");
  if (embed_dim < 1 || gate_embed_dim < 1 || expert_output_dim < 1) {
    throw Error("embedding and output dimensions must be at least 1");
  }
  for (const auto& e : experts) e.validate();
  if (loss.alpha < 0.0) throw Error("alpha must be non-negative");
  if (loss.location == LossLocation::Intermediate && loss.form != LossForm::None) {
    for (const auto& e : experts) {
      if (e.kind != ExpertKind::CrossNet) {
        throw Error("intermediate loss location requires crossnet experts");
      }
      if (e.cross_layers != experts.front().cross_layers || e.cross_layers == 0) {
        throw Error("intermediate loss location requires equal, nonzero cross layer counts");
      }
    }
  }
}

void ModelBundle::collect_dense(std::vector<Matrix*>& params) {
  for (auto& e : experts) e.collect(params);
  gate.collect(params);
  tower.collect(params);
}

std::size_t ModelBundle::parameter_count() const {
  std::size_t n = 0;
  auto count_table = [&n](const EmbeddingTable& t) {
    for (const auto& f : t.fields) n += f.size();
  };
  for (const auto& t : bank.tables) count_table(t);
  count_table(bank.gating);
  for (const auto& e : experts) n += dmoe::parameter_count(e);
  n += dmoe::parameter_count(gate);
  n += dmoe::parameter_count(tower);
  return n;
}

ModelBundle build_model(const ModelConfig& config) {
  config.validate();
  const std::size_t m = config.num_experts();
  const std::size_t f = config.schema.num_fields();
  ModelBundle model;
  model.config = config;
  model.bank = init_bank(config.schema, config.mode, m, config.embed_dim, config.gate_embed_dim,
                         config.seed);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  for (const auto& e : config.experts) {
    model.experts.push_back(init_expert(e, f, config.embed_dim, config.expert_output_dim, rng));
  }
  model.gate = init_gating(f * config.gate_embed_dim, config.gate_hidden, m, rng);
  std::vector<std::size_t> tower_widths = config.tower_hidden;
  tower_widths.push_back(1);
  model.tower = init_mlp(config.expert_output_dim, tower_widths, /*rectify_output=*/false, rng);
  return model;
}

std::size_t expected_parameter_count(const ModelConfig& config) {
  const std::size_t f = config.schema.num_fields();
  const std::size_t d = config.embed_dim;
  std::size_t rows = 0;
  for (const auto& field : config.schema.fields) rows += field.cardinality;
  const std::size_t tables = config.mode == EmbeddingMode::Shared ? 1 : config.num_experts();
  std::size_t n = tables * rows * d + rows * config.gate_embed_dim;

  auto mlp_count = [](std::size_t in, const std::vector<std::size_t>& widths) {
    std::size_t c = 0;
    for (auto w : widths) {
      c += in * w + w;
      in = w;
    }
    return c;
  };
  for (const auto& e : config.experts) {
    switch (e.kind) {
      case ExpertKind::Dnn: n += mlp_count(f * d, e.dnn_hidden); break;
      case ExpertKind::Fm: break;
      case ExpertKind::CrossNet: n += e.cross_layers * (f * d * f * d + f * d); break;
      case ExpertKind::Cin: {
        std::size_t prev = f;
        for (auto h : e.cin_maps) {
          n += h * prev * f;
          prev = h;
        }
        break;
      }
    }
    n += raw_output_width(e, f, d) * config.expert_output_dim + config.expert_output_dim;
  }
  std::vector<std::size_t> gate = config.gate_hidden;
  gate.push_back(config.num_experts());
  n += mlp_count(f * config.gate_embed_dim, gate);
  std::vector<std::size_t> tower = config.tower_hidden;
  tower.push_back(1);
  n += mlp_count(config.expert_output_dim, tower);
  return n;
}

std::vector<Matrix> ForwardPass::expert_outputs() const {
  std::vector<Matrix> out;
  out.reserve(experts.size());
  for (const auto& e : experts) out.push_back(e.output);
  return out;
}

ForwardPass forward_full(const ModelBundle& model, const EncodedDataset& ds, const Batch& batch) {
  if (!(ds.schema() == model.config.schema)) throw Error("dataset schema does not match model");
  if (batch.size() == 0) throw Error("empty batch");
  ForwardPass fwd;
  const std::size_t m = model.experts.size();
  for (std::size_t k = 0; k < m; ++k) {
    fwd.embeddings.push_back(lookup(model.bank, k, ds, batch));
    fwd.experts.push_back(expert_forward(model.experts[k], fwd.embeddings.back()));
  }
  fwd.gating_embedding = lookup(model.bank.gating, ds, batch);
  Matrix g = gate_weights(model.gate, fwd.gating_embedding, &fwd.gate);
  const std::vector<Matrix> outputs = fwd.expert_outputs();
  fwd.h = aggregate_experts(g, outputs, &fwd.aggregate);
  fwd.logits = mlp_forward(model.tower, fwd.h, &fwd.tower);
  fwd.probs.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) fwd.probs[i] = sigmoid(fwd.logits(i, 0));
  return fwd;
}

std::vector<std::vector<Matrix>> decorrelation_sites(const ForwardPass& fwd,
                                                     LossLocation location) {
  std::vector<std::vector<Matrix>> sites;
  switch (location) {
    case LossLocation::Output: sites.push_back(fwd.expert_outputs()); break;
    case LossLocation::Input: sites.push_back(fwd.embeddings); break;
    case LossLocation::Intermediate: {
      if (fwd.experts.empty()) break;
      const std::size_t layers = fwd.experts.front().cache.cross_states.size();
      for (const auto& e : fwd.experts) {
        if (e.cache.cross_states.size() != layers || layers < 2) {
          throw Error("intermediate loss location requires crossnet experts");
        }
      }
      for (std::size_t l = 1; l < layers; ++l) {
        std::vector<Matrix> group;
        for (const auto& e : fwd.experts) group.push_back(e.cache.cross_states[l]);
        sites.push_back(std::move(group));
      }
      break;
    }
  }
  return sites;
}

namespace {

std::vector<std::uint8_t> batch_labels(const EncodedDataset& ds, const Batch& batch) {
  std::vector<std::uint8_t> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) y[i] = ds.label(batch.rows[i]);
  return y;
}

}  // namespace

void ModelGradients::collect_dense(std::vector<Matrix*>& params) {
  for (auto& e : experts) e.collect(params);
  gate.collect(params);
  tower.collect(params);
}

StepLosses evaluate_objective(const ModelBundle& model, const EncodedDataset& ds,
                              const Batch& batch) {
  const ForwardPass fwd = forward_full(model, ds, batch);
  const LossConfig& lc = model.config.loss;
  StepLosses losses;
  losses.bce = bce(fwd.probs, batch_labels(ds, batch)).value;
  if (lc.active()) {
    for (const auto& site : decorrelation_sites(fwd, lc.location)) {
      losses.decorrelation += decorrelation_total(site, lc.form).total;
    }
  }
  losses.objective =
      total_objective(losses.bce, losses.decorrelation, lc.alpha, batch.size(), lc.form);
  return losses;
}

GradientResult compute_gradients(const ModelBundle& model, const EncodedDataset& ds,
                                 const Batch& batch) {
  const ForwardPass fwd = forward_full(model, ds, batch);
  const LossConfig& lc = model.config.loss;
  const std::size_t m = model.experts.size();
  const std::size_t n = batch.size();

  GradientResult res;
  const BceResult b = bce(fwd.probs, batch_labels(ds, batch));
  res.losses.bce = b.value;

  // Tower: dL/dlogit = dL/dp * p (1 - p)
  Matrix grad_logits(n, 1);
  for (std::size_t i = 0; i < n; ++i) grad_logits(i, 0) = b.grad[i] * fwd.probs[i] * (1.0 - fwd.probs[i]);
  res.grads.tower = zeros_like(model.tower);
  const Matrix grad_h = mlp_backward(model.tower, fwd.tower, grad_logits, res.grads.tower);

  GatingBackward gb = gating_backward(model.gate, fwd.gate, fwd.aggregate, grad_h);
  res.grads.gate = std::move(gb.grads);
  std::vector<Matrix> grad_outputs = std::move(gb.expert_output_grads);

  std::vector<Matrix> grad_inputs_extra(m);
  std::vector<std::vector<Matrix>> layer_grads(m);
  const double scale = decorrelation_scale(lc.alpha, n, lc.form);
  if (scale > 0.0) {
    const auto sites = decorrelation_sites(fwd, lc.location);
    for (std::size_t s = 0; s < sites.size(); ++s) {
      DecorrelationResult dr = decorrelation_total(sites[s], lc.form);
      res.losses.decorrelation += dr.total;
      for (std::size_t k = 0; k < m; ++k) {
        Matrix g = scaled(dr.grads[k], scale);
        switch (lc.location) {
          case LossLocation::Output: axpy(1.0, g, grad_outputs[k]); break;
          case LossLocation::Input: grad_inputs_extra[k] = std::move(g); break;
          case LossLocation::Intermediate: layer_grads[k].push_back(std::move(g)); break;
        }
      }
    }
  }
  res.losses.objective =
      total_objective(res.losses.bce, res.losses.decorrelation, lc.alpha, n, lc.form);

  res.grads.tables.resize(model.bank.tables.size());
  for (std::size_t k = 0; k < m; ++k) {
    ExpertBackward eb =
        expert_backward(model.experts[k], fwd.experts[k].cache, grad_outputs[k], layer_grads[k]);
    if (!grad_inputs_extra[k].empty()) axpy(1.0, grad_inputs_extra[k], eb.input_grad);
    const std::size_t t = model.bank.table_for_expert(k);
    res.grads.tables[t].append(lookup_backward(model.bank.tables[t], ds, batch, eb.input_grad));
    res.grads.experts.push_back(std::move(eb.grads));
  }
  res.grads.gating = lookup_backward(model.bank.gating, ds, batch, gb.gating_embedding_grad);
  return res;
}

}  // namespace dmoe
