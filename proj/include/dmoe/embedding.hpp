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
#include <functional>
#include <span>
#include <vector>

#include "dmoe/data.hpp"
#include "dmoe/matrix.hpp"

namespace dmoe {

// One sub-table per field, field i of shape cardinality_i x dim.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<Matrix> fields;

  std::size_t num_fields() const { return fields.size(); }
  std::size_t output_width() const { return fields.size() * dim; }
  bool operator==(const EmbeddingTable&) const = default;
};

EmbeddingTable init_table(const DatasetSchema& schema, std::size_t dim, std::uint64_t seed);

enum class EmbeddingMode { Shared, Multi };

// Expert tables (1 when shared, M when multi) and the gating table.
struct EmbeddingBank {
  EmbeddingMode mode = EmbeddingMode::Multi;
  std::vector<EmbeddingTable> tables;
  EmbeddingTable gating;

  // Table used by expert m; every expert maps to table 0 in shared mode.
  std::size_t table_for_expert(std::size_t m) const {
    return mode == EmbeddingMode::Shared ? 0 : m;
  }
  bool operator==(const EmbeddingBank&) const = default;
};

EmbeddingBank init_bank(const DatasetSchema& schema, EmbeddingMode mode, std::size_t num_experts,
                        std::size_t dim, std::size_t gating_dim, std::uint64_t seed);

// |B| x F*dim; each row concatenates the sample's field embeddings in schema order.
Matrix lookup(const EmbeddingTable& table, const EncodedDataset& ds, const Batch& batch);
Matrix lookup(const EmbeddingBank& bank, std::size_t expert, const EncodedDataset& ds,
              const Batch& batch);

struct SparseGradEntry {
  std::size_t field = 0;
  std::size_t row = 0;
  std::vector<double> grad;
};

// (field, row, gradient) triples; a (field, row) pair may repeat.
struct SparseGrad {
  std::vector<SparseGradEntry> entries;
  void append(const SparseGrad& other);
};

// Adjoint of lookup: splits dL/d(lookup output) into per-(field,row) entries.
SparseGrad lookup_backward(const EmbeddingTable& table, const EncodedDataset& ds,
                           const Batch& batch, const Matrix& grad_out);

// Called once per distinct touched row with the summed gradient.
using SparseUpdateRule = std::function<void(std::size_t field, std::size_t row,
                                            std::span<double> param,
                                            std::span<const double> grad)>;

// Sums duplicate (field,row) entries, then applies the rule to every touched
// row in (field,row) order. Untouched rows are left as they are.
void apply_sparse_grads(EmbeddingTable& table, const SparseGrad& grads,
                        const SparseUpdateRule& rule);

// Dense scatter-add of a sparse gradient into table-shaped zero matrices.
std::vector<Matrix> densify(const EmbeddingTable& table, const SparseGrad& grads);

}  // namespace dmoe
