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

#include "dmoe/embedding.hpp"

#include <cmath>
#include <map>
#include <random>
#include <utility>

namespace dmoe {

EmbeddingTable init_table(const DatasetSchema& schema, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw Error("embedding dimension must be at least 1");
  schema.validate();
  EmbeddingTable t;
  t.dim = dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (const auto& f : schema.fields) {
    Matrix m(f.cardinality, dim);
    for (double& x : m.values()) x = dist(rng);
    t.fields.push_back(std::move(m));
  }
  return t;
}

EmbeddingBank init_bank(const DatasetSchema& schema, EmbeddingMode mode, std::size_t num_experts,
                        std::size_t dim, std::size_t gating_dim, std::uint64_t seed) {
  if (num_experts < 1) throw Error("expert count must be at least 1");
  EmbeddingBank bank;
  bank.mode = mode;
  // Each table draws from its own stream derived from the bank seed.
  std::seed_seq seq{seed, std::uint64_t{0x656d62}};
  std::vector<std::uint64_t> seeds(num_experts + 1);
  seq.generate(seeds.begin(), seeds.end());
  const std::size_t n_tables = mode == EmbeddingMode::Shared ? 1 : num_experts;
  for (std::size_t m = 0; m < n_tables; ++m) bank.tables.push_back(init_table(schema, dim, seeds[m]));
  bank.gating = init_table(schema, gating_dim, seeds[num_experts]);
  return bank;
}

Matrix lookup(const EmbeddingTable& table, const EncodedDataset& ds, const Batch& batch) {
  const std::size_t f = table.num_fields();
  if (ds.num_fields() != f) throw Error("lookup: dataset field count does not match table");
  const std::size_t d = table.dim;
  Matrix out(batch.size(), f * d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto dst = out.row(i);
    auto sample = ds.sample(batch.rows[i]);
    for (std::size_t k = 0; k < f; ++k) {
      const Matrix& sub = table.fields[k];
      if (sample[k] >= sub.rows()) throw Error("lookup: index out of table range");
      auto src = sub.row(sample[k]);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(k * d));
    }
  }
  return out;
}

Matrix lookup(const EmbeddingBank& bank, std::size_t expert, const EncodedDataset& ds,
              const Batch& batch) {
  const std::size_t t = bank.table_for_expert(expert);
  if (t >= bank.tables.size()) throw Error("lookup: table index out of range");
  return lookup(bank.tables[t], ds, batch);
}

void SparseGrad::append(const SparseGrad& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

SparseGrad lookup_backward(const EmbeddingTable& table, const EncodedDataset& ds,
                           const Batch& batch, const Matrix& grad_out) {
  const std::size_t f = table.num_fields();
  const std::size_t d = table.dim;
  if (grad_out.rows() != batch.size() || grad_out.cols() != f * d) {
    throw Error("lookup_backward: gradient shape " + shape_string(grad_out));
  }
  SparseGrad g;
  g.entries.reserve(batch.size() * f);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto sample = ds.sample(batch.rows[i]);
    auto src = grad_out.row(i);
    for (std::size_t k = 0; k < f; ++k) {
      auto part = src.subspan(k * d, d);
      g.entries.push_back({k, sample[k], std::vector<double>(part.begin(), part.end())});
    }
  }
  return g;
}

namespace {

std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> coalesce(
    const EmbeddingTable& table, const SparseGrad& grads) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> summed;
  for (const auto& e : grads.entries) {
    if (e.field >= table.num_fields() || e.row >= table.fields[e.field].rows()) {
      throw Error("sparse gradient references a missing row");
    }
    if (e.grad.size() != table.dim) throw Error("sparse gradient has wrong width");
    for (double v : e.grad)
      if (!std::isfinite(v)) throw Error("non-finite gradient");
    auto [it, inserted] = summed.try_emplace({e.field, e.row}, e.grad);
    if (!inserted) {
      for (std::size_t j = 0; j < e.grad.size(); ++j) it->second[j] += e.grad[j];
    }
  }
  return summed;
}

}  // namespace

void apply_sparse_grads(EmbeddingTable& table, const SparseGrad& grads,
                        const SparseUpdateRule& rule) {
  for (const auto& [key, g] : coalesce(table, grads)) {
    rule(key.first, key.second, table.fields[key.first].row(key.second), g);
  }
}

std::vector<Matrix> densify(const EmbeddingTable& table, const SparseGrad& grads) {
  std::vector<Matrix> dense;
  for (const auto& sub : table.fields) dense.emplace_back(sub.rows(), sub.cols());
  for (const auto& [key, g] : coalesce(table, grads)) {
    auto dst = dense[key.first].row(key.second);
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
  }
  return dense;
}

}  // namespace dmoe
