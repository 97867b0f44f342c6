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

#include "dmoe/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dmoe/numerics.hpp"

namespace dmoe {

void DatasetSchema::validate() const {
  if (fields.empty()) throw Error("schema has no feature fields");
  std::set<std::string> seen;
  for (const auto& f : fields) {
    if (f.cardinality < 1) throw Error("field " + f.name + " has zero cardinality");
    if (f.cardinality > std::numeric_limits<std::uint32_t>::max()) {
      throw Error("field " + f.name + " cardinality exceeds 2^32-1");
    }
    if (!seen.insert(f.name).second) throw Error("duplicate field name: " + f.name);
    if (f.name == label_column) throw Error("label column is also a feature: " + f.name);
  }
}

DatasetSchema uniform_schema(std::size_t num_fields, std::size_t cardinality,
                             std::string label_column) {
  DatasetSchema s;
  s.label_column = std::move(label_column);
  for (std::size_t i = 0; i < num_fields; ++i) s.fields.push_back({"f" + std::to_string(i), cardinality});
  return s;
}

EncodedDataset::EncodedDataset(DatasetSchema schema, std::vector<std::uint32_t> indices,
                               std::vector<std::uint8_t> labels, std::vector<std::size_t> row_ids)
    : schema_(std::move(schema)),
      indices_(std::move(indices)),
      labels_(std::move(labels)),
      row_ids_(std::move(row_ids)) {
  schema_.validate();
  const std::size_t f = schema_.num_fields();
  if (indices_.size() != labels_.size() * f) {
    throw Error("index matrix row count does not match label count");
  }
  if (row_ids_.empty()) {
    row_ids_.resize(labels_.size());
    std::iota(row_ids_.begin(), row_ids_.end(), std::size_t{0});
  } else if (row_ids_.size() != labels_.size()) {
    throw Error("row id count does not match label count");
  }
  for (auto y : labels_)
    if (y > 1) throw Error("labels must be 0 or 1");
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] >= schema_.fields[i % f].cardinality) {
      throw Error("index out of range for field " + schema_.fields[i % f].name);
    }
  }
}

EncodedDataset EncodedDataset::subset(std::span<const std::size_t> rows) const {
  const std::size_t f = num_fields();
  std::vector<std::uint32_t> idx;
  std::vector<std::uint8_t> lab;
  std::vector<std::size_t> ids;
  idx.reserve(rows.size() * f);
  lab.reserve(rows.size());
  ids.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= size()) throw Error("subset row out of range");
    auto s = sample(r);
    idx.insert(idx.end(), s.begin(), s.end());
    lab.push_back(labels_[r]);
    ids.push_back(row_ids_[r]);
  }
  return EncodedDataset(schema_, std::move(idx), std::move(lab), std::move(ids));
}

std::uint64_t fnv1a_64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t hash_token(std::string_view token, std::uint64_t cardinality) {
  if (cardinality == 0) throw Error("cardinality must be at least 1");
  return fnv1a_64(token) % cardinality;
}

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace

EncodedDataset load_table(const std::filesystem::path& path, const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty file: " + path.string());
  strip_cr(line);
  const auto header = split_csv_line(line);
  std::unordered_map<std::string_view, std::size_t> column_of;
  for (std::size_t i = 0; i < header.size(); ++i) column_of.emplace(header[i], i);

  auto find_column = [&](const std::string& name) {
    auto it = column_of.find(name);
    if (it == column_of.end()) throw Error("missing column: " + name);
    return it->second;
  };
  const std::size_t label_col = find_column(schema.label_column);
  std::vector<std::size_t> field_cols;
  for (const auto& f : schema.fields) field_cols.push_back(find_column(f.name));

  const std::uint64_t missing_hash = fnv1a_64(kMissingToken);
  std::vector<std::uint32_t> indices;
  std::vector<std::uint8_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error("wrong number of cells at line " + std::to_string(line_no));
    }
    const auto label = cells[label_col];
    if (label == "0") {
      labels.push_back(0);
    } else if (label == "1") {
      labels.push_back(1);
    } else {
      throw Error("invalid label at line " + std::to_string(line_no));
    }
    for (std::size_t k = 0; k < field_cols.size(); ++k) {
      const auto cell = cells[field_cols[k]];
      const std::uint64_t card = schema.fields[k].cardinality;
      const std::uint64_t h = cell.empty() ? missing_hash : fnv1a_64(cell);
      indices.push_back(static_cast<std::uint32_t>(h % card));
    }
  }
  return EncodedDataset(schema, std::move(indices), std::move(labels));
}

void save_table(const std::filesystem::path& path, const EncodedDataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const auto& schema = ds.schema();
  for (const auto& f : schema.fields) out << f.name << ',';
  out << schema.label_column << '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (auto idx : ds.sample(r)) out << idx << ',';
    out << static_cast<int>(ds.label(r)) << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

EncodedDataset rehash_ids(const EncodedDataset& ds) {
  const std::size_t f = ds.num_fields();
  std::vector<std::uint32_t> idx(ds.indices().begin(), ds.indices().end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto card = ds.schema().fields[i % f].cardinality;
    idx[i] = static_cast<std::uint32_t>(hash_token(std::to_string(idx[i]), card));
  }
  return EncodedDataset(ds.schema(), std::move(idx),
                        std::vector<std::uint8_t>(ds.labels().begin(), ds.labels().end()),
                        std::vector<std::size_t>(ds.row_ids().begin(), ds.row_ids().end()));
}

DatasetSplits split_dataset(const EncodedDataset& ds, SplitFractions fractions,
                            std::uint64_t seed) {
  if (!(fractions.train > 0.0 && fractions.valid > 0.0 && fractions.test > 0.0)) {
    throw Error("split fractions must be positive");
  }
  const double total = fractions.train + fractions.valid + fractions.test;
  if (total > 1.0 + 1e-9) throw Error("fractions exceed 1");

  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const double nd = static_cast<double>(n);
  const auto n_valid = static_cast<std::size_t>(std::floor(nd * fractions.valid + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(nd * fractions.test + 1e-9));
  const auto n_used =
      std::min(n, static_cast<std::size_t>(std::floor(nd * std::min(total, 1.0) + 1e-9)));
  const std::size_t n_train = n_used - n_valid - n_test;

  std::span<const std::size_t> all(order);
  return DatasetSplits{ds.subset(all.subspan(0, n_train)),
                       ds.subset(all.subspan(n_train, n_valid)),
                       ds.subset(all.subspan(n_train + n_valid, n_test))};
}

std::vector<Batch> make_batches(std::size_t num_rows, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw Error("batch size must be at least 1");
  std::vector<std::size_t> order(num_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < num_rows; start += batch_size) {
    const std::size_t end = std::min(num_rows, start + batch_size);
    batches.push_back(Batch{{order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end)}});
  }
  return batches;
}

// ---------------------------------------------------------------------------

double SyntheticGenerator::logit(std::span<const std::uint32_t> sample) const {
  const std::size_t f = sample.size();
  double z = c0;
  for (std::size_t i = 0; i < f; ++i) {
    auto ui = u[i].row(sample[i]);
    for (std::size_t j = i + 1; j < f; ++j) {
      auto uj = u[j].row(sample[j]);
      double inner = 0.0;
      for (std::size_t k = 0; k < ui.size(); ++k) inner += ui[k] * uj[k];
      z += inner;
      const double vij = v[i][sample[i]] * v[j][sample[j]];
      for (std::size_t k = j + 1; k < f; ++k) z += vij * v[k][sample[k]];
    }
  }
  return z;
}

EncodedDataset SyntheticGenerator::draw(std::size_t rows, std::uint64_t seed) const {
  const std::size_t f = spec.fields;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(
      0, static_cast<std::uint32_t>(spec.cardinality - 1));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::uint32_t> indices(rows * f);
  std::vector<std::uint8_t> labels(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<std::uint32_t> s(indices.data() + r * f, f);
    for (auto& x : s) x = pick(rng);
    labels[r] = coin(rng) < sigmoid(logit(s)) ? 1 : 0;
  }
  return EncodedDataset(schema(), std::move(indices), std::move(labels));
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  if (spec.fields < 2) throw Error("synthetic data needs at least 2 fields");
  if (spec.rows < 1) throw Error("synthetic data needs at least 1 row");
  if (spec.cardinality < 1 || spec.dim_u < 1) throw Error("invalid synthetic spec");

  SyntheticGenerator g;
  g.spec = spec;
  const double f = static_cast<double>(spec.fields);
  const double pairs = f * (f - 1.0) / 2.0;
  const double triples = f * (f - 1.0) * (f - 2.0) / 6.0;
  // Around the means, each mechanism contributes roughly unit logit variance when signal = 1.
  const double u_std = spec.signal * std::pow(pairs * static_cast<double>(spec.dim_u), -0.25);
  const double v_std = triples > 0.0 ? spec.signal * std::pow(triples, -1.0 / 6.0) : 0.0;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < spec.fields; ++i) {
    Matrix ui(spec.cardinality, spec.dim_u);
    for (double& x : ui.values()) x = spec.u_mean + u_std * normal(rng);
    g.u.push_back(std::move(ui));
  }
  for (std::size_t i = 0; i < spec.fields; ++i) {
    std::vector<double> vi(spec.cardinality);
    for (double& x : vi) x = spec.v_mean + v_std * normal(rng);
    g.v.push_back(std::move(vi));
  }

  // Ids are uniform and independent across fields, so the mean logit
  // factorizes over the per-field table means.
  std::vector<std::vector<double>> ubar;
  std::vector<double> vbar;
  for (std::size_t i = 0; i < spec.fields; ++i) {
    std::vector<double> m(spec.dim_u, 0.0);
    for (std::size_t r = 0; r < spec.cardinality; ++r)
      for (std::size_t k = 0; k < spec.dim_u; ++k) m[k] += g.u[i](r, k);
    for (double& x : m) x /= static_cast<double>(spec.cardinality);
    ubar.push_back(std::move(m));
    double s = 0.0;
    for (double x : g.v[i]) s += x;
    vbar.push_back(s / static_cast<double>(spec.cardinality));
  }
  double expected = 0.0;
  for (std::size_t i = 0; i < spec.fields; ++i) {
    for (std::size_t j = i + 1; j < spec.fields; ++j) {
      for (std::size_t k = 0; k < spec.dim_u; ++k) expected += ubar[i][k] * ubar[j][k];
      for (std::size_t l = j + 1; l < spec.fields; ++l) expected += vbar[i] * vbar[j] * vbar[l];
    }
  }
  g.c0 = spec.bias - expected;
  EncodedDataset data = g.draw(spec.rows, rng());
  return SyntheticData{std::move(data), std::move(g)};
}

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void SyntheticGenerator::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "# synthetic CTR generator parameters\n";
  out << "# logit = c0 + sum_{i<j} <U[i][x_i], U[j][x_j]> + sum_{i<j<k} V[i][x_i] V[j][x_j] V[k][x_k]\n";
  out << "seed = " << spec.seed << '\n';
  out << "fields = " << spec.fields << '\n';
  out << "cardinality = " << spec.cardinality << '\n';
  out << "dim_u = " << spec.dim_u << '\n';
  out << "rows = " << spec.rows << '\n';
  out << "bias = " << format_double(spec.bias) << '\n';
  out << "signal = " << format_double(spec.signal) << '\n';
  out << "u_mean = " << format_double(spec.u_mean) << '\n';
  out << "v_mean = " << format_double(spec.v_mean) << '\n';
  out << "c0 = " << format_double(c0) << '\n';
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (std::size_t r = 0; r < u[i].rows(); ++r) {
      out << "U." << i << '.' << r << " =";
      for (double x : u[i].row(r)) out << ' ' << format_double(x);
      out << '\n';
    }
  }
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t r = 0; r < v[i].size(); ++r)
      out << "V." << i << '.' << r << " = " << format_double(v[i][r]) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

SyntheticGenerator SyntheticGenerator::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("malformed parameter line: " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error("parameter file missing key: " + key);
    return it->second;
  };
  SyntheticGenerator g;
  g.spec.seed = std::stoull(get("seed"));
  g.spec.fields = std::stoull(get("fields"));
  g.spec.cardinality = std::stoull(get("cardinality"));
  g.spec.dim_u = std::stoull(get("dim_u"));
  g.spec.rows = std::stoull(get("rows"));
  g.spec.bias = std::stod(get("bias"));
  g.spec.signal = std::stod(get("signal"));
  g.spec.u_mean = std::stod(get("u_mean"));
  g.spec.v_mean = std::stod(get("v_mean"));
  g.c0 = std::stod(get("c0"));
  for (std::size_t i = 0; i < g.spec.fields; ++i) {
    Matrix ui(g.spec.cardinality, g.spec.dim_u);
    std::vector<double> vi(g.spec.cardinality);
    for (std::size_t r = 0; r < g.spec.cardinality; ++r) {
      const std::string suffix = std::to_string(i) + "." + std::to_string(r);
      std::istringstream row(get("U." + suffix));
      for (double& x : ui.row(r)) {
        if (!(row >> x)) throw Error("short U row: " + suffix);
      }
      vi[r] = std::stod(get("V." + suffix));
    }
    g.u.push_back(std::move(ui));
    g.v.push_back(std::move(vi));
  }
  return g;
}

}  // namespace dmoe
