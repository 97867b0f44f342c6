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

#include <random>

#include "dmoe/embedding.hpp"
#include "dmoe/numerics.hpp"

using namespace dmoe;

namespace {

EncodedDataset small_dataset(std::size_t rows, std::size_t fields, std::size_t card,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(card - 1));
  std::vector<std::uint32_t> idx(rows * fields);
  for (auto& v : idx) v = pick(rng);
  std::vector<std::uint8_t> y(rows, 0);
  return EncodedDataset(uniform_schema(fields, card), idx, y);
}

Batch all_rows(std::size_t n) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) b.rows.push_back(i);
  return b;
}

// Plain gradient-descent rule with unit step.
void subtract(std::size_t, std::size_t, std::span<double> p, std::span<const double> g) {
  for (std::size_t k = 0; k < p.size(); ++k) p[k] -= g[k];
}

}  // namespace

TEST_CASE("init_bank table counts", "[embedding]") {
  const auto schema = uniform_schema(3, 10);
  auto se = init_bank(schema, EmbeddingMode::Shared, 4, 2, 3, 1);
  CHECK(se.tables.size() == 1);
  CHECK(se.gating.dim == 3);
  for (std::size_t m = 0; m < 4; ++m) CHECK(se.table_for_expert(m) == 0);

  auto me = init_bank(schema, EmbeddingMode::Multi, 3, 2, 2, 1);
  REQUIRE(me.tables.size() == 3);
  CHECK(me.tables[0] != me.tables[1]);
  CHECK(me.tables[0] != me.tables[2]);
  CHECK(me.tables[1] != me.tables[2]);
  CHECK(me.tables[0] != me.gating);
  CHECK(me.table_for_expert(2) == 2);

  CHECK(init_bank(schema, EmbeddingMode::Multi, 3, 2, 2, 1) == me);
  CHECK_THROWS(init_bank(schema, EmbeddingMode::Multi, 0, 2, 2, 1));

  // Uniform in +-1/sqrt(d).
  for (const auto& f : me.tables[0].fields)
    for (double v : f.values()) CHECK(std::abs(v) <= 1.0 / std::sqrt(2.0));
}

TEST_CASE("lookup concatenates field rows", "[embedding]") {
  EmbeddingTable t;
  t.dim = 2;
  t.fields = {Matrix::from_rows({{0, 0}, {1, 2}}), Matrix::from_rows({{3, 4}, {9, 9}})};
  EncodedDataset ds(uniform_schema(2, 2), {1, 0}, {1});
  Matrix out = lookup(t, ds, all_rows(1));
  CHECK(out == Matrix::from_rows({{1, 2, 3, 4}}));
}

TEST_CASE("shared mode equals aliased multi mode", "[embedding]") {
  const auto schema = uniform_schema(3, 6);
  auto ds = small_dataset(5, 3, 6, 2);
  auto se = init_bank(schema, EmbeddingMode::Shared, 3, 2, 2, 9);
  EmbeddingBank aliased = se;
  aliased.mode = EmbeddingMode::Multi;
  aliased.tables = {se.tables[0], se.tables[0], se.tables[0]};
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(lookup(se, m, ds, all_rows(5)) == lookup(aliased, m, ds, all_rows(5)));
  }
}

TEST_CASE("apply_sparse_grads", "[embedding]") {
  const auto schema = uniform_schema(2, 4);
  auto table = init_table(schema, 3, 5);
  const auto before = table;

  apply_sparse_grads(table, SparseGrad{}, subtract);
  CHECK(table == before);

  SparseGrad cancel;
  cancel.entries.push_back({1, 2, {0.5, -1.0, 2.0}});
  cancel.entries.push_back({1, 2, {-0.5, 1.0, -2.0}});
  apply_sparse_grads(table, cancel, subtract);
  CHECK(table == before);

  SparseGrad bad;
  bad.entries.push_back({0, 0, {1.0, std::nan(""), 0.0}});
  CHECK_THROWS_WITH(apply_sparse_grads(table, bad, subtract), "non-finite gradient");
  CHECK(table == before);
}

TEST_CASE("duplicate sparse entries coalesce like a dense scatter", "[embedding]") {
  const auto schema = uniform_schema(3, 5);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> field(0, 2), row(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    auto table = init_table(schema, 2, static_cast<std::uint64_t>(trial));
    SparseGrad g;
    for (int k = 0; k < 15; ++k) g.entries.push_back({field(rng), row(rng), {n(rng), n(rng)}});

    // Oracle: scatter into zero matrices by hand, then subtract.
    std::vector<Matrix> dense;
    for (const auto& f : table.fields) dense.emplace_back(f.rows(), f.cols());
    for (const auto& e : g.entries)
      for (std::size_t k = 0; k < 2; ++k) dense[e.field](e.row, k) += e.grad[k];
    auto expected = table;
    for (std::size_t f = 0; f < 3; ++f) axpy(-1.0, dense[f], expected.fields[f]);

    CHECK(densify(table, g) == dense);
    apply_sparse_grads(table, g, subtract);
    for (std::size_t f = 0; f < 3; ++f) CHECK(max_abs_diff(table.fields[f], expected.fields[f]) < 1e-15);
  }
}

TEST_CASE("lookup_backward is the adjoint of lookup", "[embedding][gradcheck]") {
  const auto schema = uniform_schema(3, 4);
  auto table = init_table(schema, 2, 3);
  auto ds = small_dataset(6, 3, 4, 8);  // repeats rows across samples
  const Batch b = all_rows(6);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix upstream(6, 6);
  for (double& v : upstream.values()) v = n(rng);

  auto dense = densify(table, lookup_backward(table, ds, b, upstream));
  std::vector<double> x, g;
  for (std::size_t f = 0; f < 3; ++f) {
    x.insert(x.end(), table.fields[f].values().begin(), table.fields[f].values().end());
    g.insert(g.end(), dense[f].values().begin(), dense[f].values().end());
  }
  auto objective = [&](std::span<const double> v) {
    EmbeddingTable t = table;
    std::size_t k = 0;
    for (auto& f : t.fields)
      for (double& p : f.values()) p = v[k++];
    return dot(lookup(t, ds, b), upstream);
  };
  CHECK(central_diff_gradcheck(objective, x, g, 1e-5, 1e-8).passed);
}
