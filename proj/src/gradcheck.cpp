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

#include "dmoe/gradcheck.hpp"

#include <algorithm>
#include <random>

namespace dmoe {

namespace {

struct Group {
  std::string name;
  std::vector<Matrix*> params;
  std::vector<const Matrix*> grads;
};

std::vector<double> flatten(const std::vector<const Matrix*>& ms) {
  std::vector<double> out;
  for (const Matrix* m : ms) out.insert(out.end(), m->values().begin(), m->values().end());
  return out;
}

void scatter(std::span<const double> x, const std::vector<Matrix*>& ms) {
  std::size_t k = 0;
  for (Matrix* m : ms)
    for (double& v : m->values()) v = x[k++];
}

}  // namespace

ModelGradCheck full_model_gradcheck(ModelBundle& model, const EncodedDataset& ds,
                                    const Batch& batch, double step, double tol) {
  GradientResult analytic = compute_gradients(model, ds, batch);
  ModelGradients& g = analytic.grads;

  std::vector<std::vector<Matrix>> table_grads;
  for (std::size_t t = 0; t < model.bank.tables.size(); ++t) {
    table_grads.push_back(densify(model.bank.tables[t], g.tables[t]));
  }
  std::vector<Matrix> gating_grad = densify(model.bank.gating, g.gating);

  std::vector<Group> groups;
  for (std::size_t t = 0; t < model.bank.tables.size(); ++t) {
    Group grp{"embedding.table" + std::to_string(t), {}, {}};
    for (std::size_t f = 0; f < model.bank.tables[t].fields.size(); ++f) {
      grp.params.push_back(&model.bank.tables[t].fields[f]);
      grp.grads.push_back(&table_grads[t][f]);
    }
    groups.push_back(std::move(grp));
  }
  {
    Group grp{"embedding.gating", {}, {}};
    for (std::size_t f = 0; f < model.bank.gating.fields.size(); ++f) {
      grp.params.push_back(&model.bank.gating.fields[f]);
      grp.grads.push_back(&gating_grad[f]);
    }
    groups.push_back(std::move(grp));
  }
  for (std::size_t k = 0; k < model.experts.size(); ++k) {
    std::vector<Matrix*> ps;
    std::vector<Matrix*> gs;
    model.experts[k].collect(ps);
    g.experts[k].collect(gs);
    // The alignment head owns the last two blocks.
    const std::string prefix = "expert" + std::to_string(k) + ".";
    Group body{prefix + std::string(to_string(model.experts[k].config.kind)), {}, {}};
    Group align{prefix + "align", {}, {}};
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Group& dst = i + 2 >= ps.size() ? align : body;
      dst.params.push_back(ps[i]);
      dst.grads.push_back(gs[i]);
    }
    if (!body.params.empty()) groups.push_back(std::move(body));
    groups.push_back(std::move(align));
  }
  {
    Group grp{"gate", {}, {}};
    std::vector<Matrix*> gs;
    model.gate.collect(grp.params);
    g.gate.collect(gs);
    grp.grads.assign(gs.begin(), gs.end());
    groups.push_back(std::move(grp));
  }
  {
    Group grp{"tower", {}, {}};
    std::vector<Matrix*> gs;
    model.tower.collect(grp.params);
    g.tower.collect(gs);
    grp.grads.assign(gs.begin(), gs.end());
    groups.push_back(std::move(grp));
  }

  ModelGradCheck out;
  for (auto& grp : groups) {
    std::vector<const Matrix*> current(grp.params.begin(), grp.params.end());
    const std::vector<double> x0 = flatten(current);
    const std::vector<double> ga = flatten(grp.grads);
    auto objective = [&](std::span<const double> x) {
      scatter(x, grp.params);
      return evaluate_objective(model, ds, batch).objective;
    };
    GroupCheck gc;
    gc.group = grp.name;
    gc.coordinates = x0.size();
    gc.report = central_diff_gradcheck(objective, x0, ga, step, tol);
    scatter(x0, grp.params);
    out.max_relative_error = std::max(out.max_relative_error, gc.report.max_relative_error);
    out.passed = out.passed && gc.report.passed;
    out.groups.push_back(std::move(gc));
  }
  return out;
}

MicroSpec micro_spec_from(const KeyValues& kv) {
  MicroSpec s;
  auto num = [&](const char* key, auto& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    using T = std::decay_t<decltype(out)>;
    if constexpr (std::is_floating_point_v<T>) {
      out = std::stod(it->second);
    } else {
      out = static_cast<T>(std::stoull(it->second));
    }
  };
  num("gradcheck.batch", s.batch);
  num("gradcheck.fields", s.fields);
  num("gradcheck.cardinality", s.cardinality);
  num("gradcheck.embed_dim", s.embed_dim);
  num("gradcheck.output_dim", s.output_dim);
  num("gradcheck.alpha", s.alpha);
  num("gradcheck.seed", s.seed);
  num("gradcheck.step", s.step);
  num("gradcheck.tol", s.tol);
  return s;
}

ModelConfig micro_model_config(const MicroSpec& spec, std::vector<ExpertKind> kinds,
                               EmbeddingMode mode, LossConfig loss) {
  ModelConfig c;
  c.schema = uniform_schema(spec.fields, spec.cardinality);
  c.mode = mode;
  for (auto k : kinds) {
    ExpertConfig e;
    e.kind = k;
    e.dnn_hidden = {4, 3};
    e.cross_layers = 2;
    e.cin_maps = {2, 2};
    c.experts.push_back(e);
  }
  c.embed_dim = spec.embed_dim;
  c.gate_embed_dim = spec.embed_dim;
  c.expert_output_dim = spec.output_dim;
  c.gate_hidden = {4};
  c.tower_hidden = {4};
  c.loss = loss;
  c.seed = spec.seed;
  return c;
}

EncodedDataset micro_dataset(const MicroSpec& spec) {
  std::mt19937_64 rng(spec.seed + 1);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(spec.cardinality - 1));
  std::vector<std::uint32_t> idx(spec.batch * spec.fields);
  for (auto& x : idx) x = pick(rng);
  std::vector<std::uint8_t> labels(spec.batch);
  for (std::size_t i = 0; i < spec.batch; ++i) labels[i] = static_cast<std::uint8_t>(i % 2);
  return EncodedDataset(uniform_schema(spec.fields, spec.cardinality), std::move(idx),
                        std::move(labels));
}

ModelBundle build_micro_model(const ModelConfig& config) {
  ModelBundle model = build_model(config);
  for (auto& e : model.experts)
    for (double& b : e.align.bias.values()) b += 1.0;
  return model;
}

bool GradCheckSuite::passed() const {
  return std::all_of(cases.begin(), cases.end(),
                     [](const SuiteCase& c) { return c.result.passed; });
}

GradCheckSuite run_gradcheck_suite(const MicroSpec& spec) {
  using K = ExpertKind;
  struct CaseDef {
    std::string name;
    std::vector<K> kinds;
    EmbeddingMode mode;
    LossConfig loss;
  };
  const double a = spec.alpha;
  const std::vector<CaseDef> defs = {
      {"dnn/corr/output", {K::Dnn, K::Dnn}, EmbeddingMode::Multi, {LossForm::Corr, a, LossLocation::Output}},
      {"fm/corr/output", {K::Fm, K::Fm}, EmbeddingMode::Multi, {LossForm::Corr, a, LossLocation::Output}},
      {"crossnet/corr/output", {K::CrossNet, K::CrossNet}, EmbeddingMode::Multi, {LossForm::Corr, a, LossLocation::Output}},
      {"cin/corr/output", {K::Cin, K::Cin}, EmbeddingMode::Multi, {LossForm::Corr, a, LossLocation::Output}},
      {"hetero crossnet+cin/corr/output", {K::CrossNet, K::Cin}, EmbeddingMode::Multi, {LossForm::Corr, a, LossLocation::Output}},
      {"shared-embedding crossnet/corr/output", {K::CrossNet, K::CrossNet}, EmbeddingMode::Shared, {LossForm::Corr, a, LossLocation::Output}},
      {"crossnet/cov_l1/output", {K::CrossNet, K::CrossNet}, EmbeddingMode::Multi, {LossForm::CovL1, a, LossLocation::Output}},
      {"crossnet/cov_l2/output", {K::CrossNet, K::CrossNet}, EmbeddingMode::Multi, {LossForm::CovL2, a, LossLocation::Output}},
      {"crossnet/corr/input", {K::CrossNet, K::CrossNet}, EmbeddingMode::Multi, {LossForm::Corr, a, LossLocation::Input}},
      {"crossnet/corr/intermediate", {K::CrossNet, K::CrossNet}, EmbeddingMode::Multi, {LossForm::Corr, a, LossLocation::Intermediate}},
      {"dnn+fm/bce only", {K::Dnn, K::Fm}, EmbeddingMode::Multi, {LossForm::None, 0.0, LossLocation::Output}},
  };
  const EncodedDataset ds = micro_dataset(spec);
  Batch batch;
  for (std::size_t i = 0; i < ds.size(); ++i) batch.rows.push_back(i);

  GradCheckSuite suite;
  for (const auto& d : defs) {
    ModelBundle model = build_micro_model(micro_model_config(spec, d.kinds, d.mode, d.loss));
    suite.cases.push_back({d.name, full_model_gradcheck(model, ds, batch, spec.step, spec.tol)});
  }
  return suite;
}

}  // namespace dmoe
