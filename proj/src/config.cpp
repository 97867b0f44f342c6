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

#include "dmoe/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace dmoe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  if (trim(s).empty()) return parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  return parts;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw Error("config key " + key + ": expected a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw Error("config key " + key + ": expected a number, got '" + v + "'");
  }
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& p : split(v, ',')) out.push_back(to_u64(key, p));
  return out;
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Tracks which keys were consumed so leftovers can be reported.
class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  const std::string* find(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }
  template <typename F>
  void get(const std::string& key, F&& apply) {
    if (const auto* v = find(key)) apply(*v);
  }
  void u64(const std::string& key, std::uint64_t& out) {
    get(key, [&](const std::string& v) { out = to_u64(key, v); });
  }
  void size(const std::string& key, std::size_t& out) {
    get(key, [&](const std::string& v) { out = static_cast<std::size_t>(to_u64(key, v)); });
  }
  void real(const std::string& key, double& out) {
    get(key, [&](const std::string& v) { out = to_double(key, v); });
  }
  void sizes(const std::string& key, std::vector<std::size_t>& out) {
    get(key, [&](const std::string& v) { out = to_sizes(key, v); });
  }
  void mark_prefix(const std::string& prefix) {
    for (const auto& [k, v] : kv_)
      if (k.rfind(prefix, 0) == 0) used_.insert(k);
  }
  void reject_unknown() const {
    for (const auto& [k, v] : kv_) {
      if (!used_.count(k)) throw Error("unknown config key: " + k);
    }
  }

 private:
  const KeyValues& kv_;
  std::set<std::string> used_;
};

DatasetSchema read_schema(Reader& r, DatasetSchema schema) {
  r.get("schema.label", [&](const std::string& v) { schema.label_column = v; });
  r.get("schema.fields", [&](const std::string& v) {
    schema.fields.clear();
    for (const auto& item : split(v, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw Error("schema.fields entries must be name:cardinality, got '" + item + "'");
      }
      schema.fields.push_back(
          {trim(item.substr(0, colon)),
           static_cast<std::size_t>(to_u64("schema.fields", trim(item.substr(colon + 1))))});
    }
  });
  return schema;
}

ModelConfig read_model(Reader& r, const DatasetSchema& default_schema) {
  ModelConfig c;
  c.schema = read_schema(r, default_schema);
  r.get("model.mode", [&](const std::string& v) {
    if (v == "se") {
      c.mode = EmbeddingMode::Shared;
    } else if (v == "me") {
      c.mode = EmbeddingMode::Multi;
    } else {
      throw Error("model.mode must be se or me, got '" + v + "'");
    }
  });
  std::vector<std::string> kinds = {"crossnet", "crossnet"};
  r.get("model.experts", [&](const std::string& v) { kinds = split(v, ','); });
  for (const auto& k : kinds) {
    ExpertConfig e;
    e.kind = parse_expert_kind(k);
    c.experts.push_back(e);
  }
  // Per-kind hyperparameters first, then per-index overrides.
  for (auto& e : c.experts) {
    r.sizes("expert.dnn.hidden", e.dnn_hidden);
    r.size("expert.crossnet.layers", e.cross_layers);
    r.sizes("expert.cin.maps", e.cin_maps);
  }
  for (std::size_t i = 0; i < c.experts.size(); ++i) {
    const std::string p = "expert." + std::to_string(i) + ".";
    r.sizes(p + "hidden", c.experts[i].dnn_hidden);
    r.size(p + "layers", c.experts[i].cross_layers);
    r.sizes(p + "maps", c.experts[i].cin_maps);
  }
  r.size("model.embed_dim", c.embed_dim);
  c.gate_embed_dim = c.embed_dim;
  r.size("model.gate_embed_dim", c.gate_embed_dim);
  r.size("model.expert_output_dim", c.expert_output_dim);
  r.sizes("model.gate_hidden", c.gate_hidden);
  r.sizes("model.tower_hidden", c.tower_hidden);
  r.u64("model.seed", c.seed);
  r.get("loss.form", [&](const std::string& v) { c.loss.form = parse_loss_form(v); });
  r.real("loss.alpha", c.loss.alpha);
  r.get("loss.location", [&](const std::string& v) { c.loss.location = parse_loss_location(v); });
  return c;
}

SyntheticSpec read_synth(Reader& r) {
  SyntheticSpec s;
  r.size("synth.fields", s.fields);
  r.size("synth.cardinality", s.cardinality);
  r.size("synth.dim_u", s.dim_u);
  r.size("synth.rows", s.rows);
  r.u64("synth.seed", s.seed);
  r.real("synth.bias", s.bias);
  r.real("synth.signal", s.signal);
  r.real("synth.u_mean", s.u_mean);
  r.real("synth.v_mean", s.v_mean);
  return s;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

SyntheticSpec synthetic_spec_from(const KeyValues& kv) {
  Reader r(kv);
  return read_synth(r);
}

ModelConfig model_config_from(const KeyValues& kv) {
  Reader r(kv);
  ModelConfig c = read_model(r, DatasetSchema{});
  r.reject_unknown();
  return c;
}

RunConfig parse_run_config(const KeyValues& kv) {
  Reader r(kv);
  RunConfig rc;
  DataConfig& d = rc.data;
  r.get("data.source", [&](const std::string& v) {
    if (v != "csv" && v != "synthetic") throw Error("data.source must be csv or synthetic");
    d.source = v;
  });
  r.get("data.train", [&](const std::string& v) { d.train = v; });
  r.get("data.valid", [&](const std::string& v) { d.valid = v; });
  r.get("data.test", [&](const std::string& v) { d.test = v; });
  r.get("data.table", [&](const std::string& v) { d.table = v; });
  r.get("data.split", [&](const std::string& v) {
    const auto parts = split(v, ',');
    if (parts.size() != 3) throw Error("data.split needs three fractions");
    d.split = {to_double("data.split", parts[0]), to_double("data.split", parts[1]),
               to_double("data.split", parts[2])};
  });
  r.u64("data.split_seed", d.split_seed);
  d.synth = read_synth(r);

  DatasetSchema default_schema;
  if (d.source == "synthetic") default_schema = uniform_schema(d.synth.fields, d.synth.cardinality);
  rc.model = read_model(r, default_schema);

  TrainConfig& t = rc.train;
  r.real("train.lr", t.adam.learning_rate);
  r.real("train.beta1", t.adam.beta1);
  r.real("train.beta2", t.adam.beta2);
  r.real("train.epsilon", t.adam.epsilon);
  r.size("train.batch_size", t.batch_size);
  r.size("train.epochs", t.epochs);
  r.size("train.patience", t.patience);
  r.u64("train.seed", t.seed);
  r.size("train.eval_cec_rows", t.eval_cec_rows);
  r.mark_prefix("gradcheck.");
  r.reject_unknown();

  t.validate();
  if (d.source == "csv" && !rc.model.schema.fields.empty()) rc.model.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_key_values(path));
}

std::string model_config_to_text(const ModelConfig& c) {
  std::ostringstream out;
  out << "schema.label = " << c.schema.label_column << '\n';
  out << "schema.fields = ";
  for (std::size_t i = 0; i < c.schema.fields.size(); ++i) {
    out << (i ? "," : "") << c.schema.fields[i].name << ':' << c.schema.fields[i].cardinality;
  }
  out << '\n';
  out << "model.mode = " << (c.mode == EmbeddingMode::Shared ? "se" : "me") << '\n';
  out << "model.experts = ";
  for (std::size_t i = 0; i < c.experts.size(); ++i) {
    out << (i ? "," : "") << to_string(c.experts[i].kind);
  }
  out << '\n';
  for (std::size_t i = 0; i < c.experts.size(); ++i) {
    const auto& e = c.experts[i];
    out << "expert." << i << ".hidden = " << join(e.dnn_hidden) << '\n';
    out << "expert." << i << ".layers = " << e.cross_layers << '\n';
    out << "expert." << i << ".maps = " << join(e.cin_maps) << '\n';
  }
  out << "model.embed_dim = " << c.embed_dim << '\n';
  out << "model.gate_embed_dim = " << c.gate_embed_dim << '\n';
  out << "model.expert_output_dim = " << c.expert_output_dim << '\n';
  out << "model.gate_hidden = " << join(c.gate_hidden) << '\n';
  out << "model.tower_hidden = " << join(c.tower_hidden) << '\n';
  out << "model.seed = " << c.seed << '\n';
  out << "loss.form = " << to_string(c.loss.form) << '\n';
  out << "loss.alpha = " << fmt_double(c.loss.alpha) << '\n';
  out << "loss.location = " << to_string(c.loss.location) << '\n';
  return out.str();
}

}  // namespace dmoe
