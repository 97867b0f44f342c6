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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmoe/matrix.hpp"

namespace dmoe {

struct FeatureField {
  std::string name;
  std::size_t cardinality = 1;  // hash-bucket count
  bool operator==(const FeatureField&) const = default;
};

struct DatasetSchema {
  std::vector<FeatureField> fields;
  std::string label_column = "label";

  std::size_t num_fields() const { return fields.size(); }
  void validate() const;
  bool operator==(const DatasetSchema&) const = default;
};

// Schema with fields "f0".."f{n-1}", each with the same cardinality.
DatasetSchema uniform_schema(std::size_t num_fields, std::size_t cardinality,
                             std::string label_column = "label");

// Categorical samples encoded as per-field bucket ids plus binary labels.
// Immutable once built; row_ids remember the position in the source table.
class EncodedDataset {
 public:
  EncodedDataset() = default;
  EncodedDataset(DatasetSchema schema, std::vector<std::uint32_t> indices,
                 std::vector<std::uint8_t> labels, std::vector<std::size_t> row_ids = {});

  const DatasetSchema& schema() const { return schema_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t num_fields() const { return schema_.num_fields(); }

  std::span<const std::uint32_t> sample(std::size_t row) const {
    return {indices_.data() + row * num_fields(), num_fields()};
  }
  std::uint32_t index(std::size_t row, std::size_t field) const {
    return indices_[row * num_fields() + field];
  }
  std::uint8_t label(std::size_t row) const { return labels_[row]; }
  std::size_t row_id(std::size_t row) const { return row_ids_[row]; }

  std::span<const std::uint32_t> indices() const { return indices_; }
  std::span<const std::uint8_t> labels() const { return labels_; }
  std::span<const std::size_t> row_ids() const { return row_ids_; }

  // Rows picked in the given order; row ids are carried along.
  EncodedDataset subset(std::span<const std::size_t> rows) const;

  bool operator==(const EncodedDataset&) const = default;

 private:
  DatasetSchema schema_;
  std::vector<std::uint32_t> indices_;
  std::vector<std::uint8_t> labels_;
  std::vector<std::size_t> row_ids_;
};

// Row offsets into an EncodedDataset.
struct Batch {
  std::vector<std::size_t> rows;
  std::size_t size() const { return rows.size(); }
};

inline constexpr std::string_view kMissingToken = "__MISSING__";

// FNV-1a, 64-bit.
std::uint64_t fnv1a_64(std::string_view bytes);
// fnv1a_64(token) mod cardinality.
std::uint64_t hash_token(std::string_view token, std::uint64_t cardinality);

// Reads a comma-separated table whose first line is a header. Every schema
// field is hashed into its bucket range; empty cells hash the missing sentinel.
EncodedDataset load_table(const std::filesystem::path& path, const DatasetSchema& schema);

// Writes the dataset with bucket ids as tokens.
void save_table(const std::filesystem::path& path, const EncodedDataset& ds);

// The encoding load_table gives to a table written by save_table: every id is
// re-hashed as its decimal token. Row ids are kept.
EncodedDataset rehash_ids(const EncodedDataset& ds);

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct DatasetSplits {
  EncodedDataset train;
  EncodedDataset valid;
  EncodedDataset test;
};

DatasetSplits split_dataset(const EncodedDataset& ds, SplitFractions fractions,
                            std::uint64_t seed);

std::vector<Batch> make_batches(std::size_t num_rows, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed);
inline std::vector<Batch> make_batches(const EncodedDataset& ds, std::size_t batch_size,
                                       std::optional<std::uint64_t> shuffle_seed) {
  return make_batches(ds.size(), batch_size, shuffle_seed);
}

// ---------------------------------------------------------------------------
// Synthetic CTR data with two interaction mechanisms: a pairwise inner product
// over vector embeddings U and a third-order product over scalar weights V.

struct SyntheticSpec {
  std::size_t fields = 6;
  std::size_t cardinality = 100;
  std::size_t dim_u = 4;
  std::size_t rows = 50000;
  std::uint64_t seed = 1;
  double bias = 0.0;    // expected logit; c0 absorbs the latent means
  double signal = 1.0;  // scales both mechanisms
  double u_mean = 0.2;
  double v_mean = 0.3;
};

struct SyntheticGenerator {
  SyntheticSpec spec;
  double c0 = 0.0;
  std::vector<Matrix> u;               // per field: cardinality x dim_u
  std::vector<std::vector<double>> v;  // per field: cardinality scalars

  DatasetSchema schema() const { return uniform_schema(spec.fields, spec.cardinality); }
  double logit(std::span<const std::uint32_t> sample) const;

  // Fresh sample drawn from the same generator.
  EncodedDataset draw(std::size_t rows, std::uint64_t seed) const;

  void save(const std::filesystem::path& path) const;
  static SyntheticGenerator load(const std::filesystem::path& path);
};

struct SyntheticData {
  EncodedDataset data;
  SyntheticGenerator generator;
};

SyntheticData gen_synthetic(const SyntheticSpec& spec);

}  // namespace dmoe
