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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dmoe/gradcheck.hpp"
#include "dmoe/model.hpp"
#include "dmoe/numerics.hpp"
#include "dmoe/optimizer.hpp"

using namespace dmoe;

namespace {

ModelConfig tiny_config(EmbeddingMode mode = EmbeddingMode::Multi) {
  ModelConfig c;
  c.schema = uniform_schema(2, 4);
  c.mode = mode;
  ExpertConfig e;
  e.kind = ExpertKind::CrossNet;
  e.cross_layers = 1;
  c.experts = {e, e};
  c.embed_dim = 2;
  c.gate_embed_dim = 2;
  c.expert_output_dim = 3;
  c.gate_hidden = {4};
  c.tower_hidden = {5};
  c.seed = 3;
  return c;
}

EncodedDataset tiny_data(std::size_t rows, std::size_t fields, std::size_t card, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> idx(rows * fields);
  for (auto& v : idx) v = static_cast<std::uint32_t>(rng() % card);
  std::vector<std::uint8_t> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = static_cast<std::uint8_t>(i % 2);
  return EncodedDataset(uniform_schema(fields, card), idx, y);
}

Batch all_rows(std::size_t n) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) b.rows.push_back(i);
  return b;
}

}  // namespace

TEST_CASE("parameter count by hand", "[model]") {
  // tables 2*(2*4*2) + gating 2*4*2 + experts 2*(4*4+4 + 4*3+3)
  // + gate (4*4+4 + 4*2+2) + tower (3*5+5 + 5*1+1) = 32+16+70+30+26
  const auto c = tiny_config();
  CHECK(expected_parameter_count(c) == 174);
  CHECK(build_model(c).parameter_count() == 174);

  for (auto kind : {ExpertKind::Dnn, ExpertKind::Fm, ExpertKind::Cin}) {
    auto h = c;
    h.experts[1].kind = kind;
    h.experts[1].dnn_hidden = {3, 2};
    h.experts[1].cin_maps = {2, 3};
    CHECK(build_model(h).parameter_count() == expected_parameter_count(h));
  }

  auto se = tiny_config(EmbeddingMode::Shared);
  se.experts[0].kind = se.experts[1].kind = ExpertKind::Dnn;
  auto model = build_model(se);
  CHECK(model.bank.tables.size() == 1);
  CHECK(model.parameter_count() == expected_parameter_count(se));
}

TEST_CASE("build_model errors and determinism", "[model]") {
  auto c = tiny_config();
  CHECK(build_model(c) == build_model(c));
  c.loss = {LossForm::Corr, 0.5, LossLocation::Intermediate};
  c.experts[1].kind = ExpertKind::Fm;
  CHECK_THROWS_WITH(build_model(c), "intermediate loss location requires crossnet experts");
  c.experts.clear();
  CHECK_THROWS(build_model(c));
}

TEST_CASE("forward_full matches a straight-line composition", "[model]") {
  auto c = tiny_config();
  c.experts[1].kind = ExpertKind::Cin;
  c.experts[1].cin_maps = {3};
  auto model = build_model(c);
  auto ds = tiny_data(7, 2, 4, 5);
  auto b = all_rows(7);
  auto fwd = forward_full(model, ds, b);

  std::vector<Matrix> outs;
  for (std::size_t m = 0; m < 2; ++m) {
    Matrix e = lookup(model.bank.tables[m], ds, b);
    const auto& s = model.experts[m];
    Matrix raw = m == 0 ? crossnet_forward(s, e) : cin_forward(s, e);
    outs.push_back(align_forward(s.align, raw));
  }
  Matrix g = gate_weights(model.gate, lookup(model.bank.gating, ds, b));
  Matrix h = aggregate_experts(g, outs);
  Matrix z = mlp_forward(model.tower, h);
  REQUIRE(fwd.probs.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(fwd.probs[i] - sigmoid(z(i, 0))) < 1e-12);
  for (std::size_t m = 0; m < 2; ++m) CHECK(max_abs_diff(fwd.expert_outputs()[m], outs[m]) < 1e-12);
}

TEST_CASE("forward_full degenerate cases", "[model]") {
  auto c = tiny_config();
  c.experts.resize(1);
  auto model = build_model(c);
  auto ds = tiny_data(5, 2, 4, 6);
  auto fwd = forward_full(model, ds, all_rows(5));
  CHECK(fwd.gate.weights == Matrix(5, 1, 1.0));
  Matrix z = mlp_forward(model.tower, fwd.expert_outputs()[0]);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(fwd.probs[i] - sigmoid(z(i, 0))) < 1e-12);

  auto zeroed = build_model(tiny_config());
  for (auto& e : zeroed.experts) {
    std::vector<Matrix*> ps;
    e.collect(ps);
    for (auto* p : ps) p->fill(0.0);
  }
  for (auto& l : zeroed.tower.layers) l.weight.fill(0.0);
  zeroed.tower.layers.back().bias.fill(0.3);
  auto f0 = forward_full(zeroed, ds, all_rows(5));
  for (double p : f0.probs) CHECK(p == sigmoid(0.3));
}

TEST_CASE("gate logit shifts leave predictions unchanged", "[model][property]") {
  auto model = build_model(tiny_config());
  auto ds = tiny_data(6, 2, 4, 7);
  auto base = forward_full(model, ds, all_rows(6));
  auto shifted = model;
  for (double& b : shifted.gate.mlp.layers.back().bias.values()) b += 3.75;
  auto after = forward_full(shifted, ds, all_rows(6));
  CHECK(max_abs_diff(after.gate.weights, base.gate.weights) < 1e-12);
  CHECK(max_abs_diff(after.h, base.h) < 1e-12);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(after.probs[i] - base.probs[i]) < 1e-12);
}

TEST_CASE("micro model full gradcheck", "[model][gradcheck]") {
  MicroSpec spec;
  spec.batch = 4;
  spec.fields = 2;
  spec.cardinality = 4;
  spec.embed_dim = 2;
  spec.output_dim = 2;
  const auto ds = micro_dataset(spec);
  for (auto form : {LossForm::Corr, LossForm::CovL1, LossForm::CovL2}) {
    auto model = build_micro_model(micro_model_config(
        spec, {ExpertKind::CrossNet, ExpertKind::CrossNet}, EmbeddingMode::Multi,
        {form, 0.5, LossLocation::Output}));
    auto res = full_model_gradcheck(model, ds, all_rows(4), spec.step, spec.tol);
    for (const auto& g : res.groups) {
      INFO(to_string(form) << " " << g.group << " err " << g.report.max_relative_error);
      CHECK(g.report.passed);
    }
    CHECK(res.groups.size() == 2 + 1 + 2 * 2 + 2);
  }
}

TEST_CASE("gradient suite covers every kind, form and location", "[model][gradcheck]") {
  auto suite = run_gradcheck_suite(MicroSpec{});
  CHECK(suite.cases.size() == 11);
  for (const auto& c : suite.cases) {
    INFO(c.name << " max rel err " << c.result.max_relative_error);
    CHECK(c.result.passed);
    CHECK(c.result.max_relative_error < 1e-4);
  }
  CHECK(suite.passed());
}

TEST_CASE("adam_step examples", "[optimizer]") {
  AdamConfig cfg;
  Matrix p = Matrix::from_rows({{1.0, -2.0, 0.5}});
  Matrix* ps[] = {&p};
  auto state = make_adam_state(ps);

  Matrix zero(1, 3);
  const Matrix* gz[] = {&zero};
  adam_step(ps, gz, state, cfg);
  CHECK(p == Matrix::from_rows({{1.0, -2.0, 0.5}}));
  CHECK(state.step == 1);

  Matrix q = Matrix::from_rows({{1.0, -2.0, 0.5}});
  Matrix* qs[] = {&q};
  auto s2 = make_adam_state(qs);
  Matrix g = Matrix::from_rows({{0.3, -4.0, 1e-3}});
  const Matrix* gs[] = {&g};
  adam_step(qs, gs, s2, cfg);
  const double start[] = {1.0, -2.0, 0.5};
  for (std::size_t k = 0; k < 3; ++k) {
    const double gk = g(0, k);
    CHECK(std::abs(q(0, k) - (start[k] - cfg.learning_rate * gk / (std::abs(gk) + cfg.epsilon))) < 1e-15);
  }

  AdamConfig sign = cfg;
  sign.beta1 = 0.0;
  sign.beta2 = 0.0;
  sign.epsilon = 0.0;
  sign.learning_rate = 0.1;
  Matrix r = Matrix::from_rows({{0.0, 0.0}});
  Matrix* rs[] = {&r};
  auto s3 = make_adam_state(rs);
  Matrix gr = Matrix::from_rows({{5.0, -0.01}});
  const Matrix* grs[] = {&gr};
  adam_step(rs, grs, s3, sign);
  adam_step(rs, grs, s3, sign);
  CHECK(std::abs(r(0, 0) - (-0.2)) < 1e-15);
  CHECK(std::abs(r(0, 1) - 0.2) < 1e-15);

  Matrix bad = Matrix::from_rows({{1.0, std::nan("")}});
  const Matrix* gb[] = {&bad};
  const Matrix before = r;
  CHECK_THROWS_WITH(adam_step(rs, gb, s3, sign), "non-finite gradient");
  CHECK(r == before);
}

TEST_CASE("lazy embedding updates leave untouched rows alone", "[optimizer]") {
  auto model = build_model(tiny_config());
  const auto before = model.bank;
  EncodedDataset ds(uniform_schema(2, 4), {0, 1, 0, 1}, {1, 0});
  ModelOptimizer opt(model, AdamConfig{});
  auto grads = compute_gradients(model, ds, all_rows(2)).grads;
  opt.step(model, grads);
  CHECK(opt.steps() == 1);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(model.bank.tables[t].fields[0].row(0)[0] != before.tables[t].fields[0].row(0)[0]);
    for (std::size_t r = 1; r < 4; ++r) {
      auto now = model.bank.tables[t].fields[0].row(r);
      auto was = before.tables[t].fields[0].row(r);
      CHECK(std::equal(now.begin(), now.end(), was.begin()));
    }
  }
}
