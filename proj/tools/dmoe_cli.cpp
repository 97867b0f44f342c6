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

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmoe/config.hpp"
#include "dmoe/gradcheck.hpp"
#include "dmoe/persistence.hpp"
#include "dmoe/trainer.hpp"

namespace {

using namespace dmoe;

struct LoadedData {
  EncodedDataset train;
  EncodedDataset valid;
  EncodedDataset test;
};

LoadedData load_data(const RunConfig& rc) {
  const DataConfig& d = rc.data;
  if (d.source == "synthetic") {
    // Same encoding as the table gen-synth writes, so saved models score it directly.
    auto syn = gen_synthetic(d.synth);
    auto s = split_dataset(rehash_ids(syn.data), d.split, d.split_seed);
    return {std::move(s.train), std::move(s.valid), std::move(s.test)};
  }
  const DatasetSchema& schema = rc.model.schema;
  if (!d.table.empty()) {
    auto s = split_dataset(load_table(d.table, schema), d.split, d.split_seed);
    return {std::move(s.train), std::move(s.valid), std::move(s.test)};
  }
  if (d.train.empty() || d.valid.empty()) {
    throw Error("config needs data.table or both data.train and data.valid");
  }
  LoadedData out{load_table(d.train, schema), load_table(d.valid, schema), {}};
  if (!d.test.empty()) out.test = load_table(d.test, schema);
  return out;
}

int cmd_train(const std::string& config_path, const std::string& out_path) {
  RunConfig rc = load_run_config(config_path);
  LoadedData data = load_data(rc);
  ModelBundle model = build_model(rc.model);
  std::printf("parameters %zu  train %zu  valid %zu\n", model.parameter_count(), data.train.size(),
              data.valid.size());
  auto report = train_loop(model, data.train, data.valid, rc.train, [](const EpochRecord& r) {
    std::printf("epoch %zu  train_logloss %.6f  valid_auc %.6f  valid_logloss %.6f  cec_mean %.6f  %.1fs\n",
                r.epoch, r.train_logloss, r.valid_auc, r.valid_logloss, r.valid_cec.mean(), r.seconds);
    std::fflush(stdout);
  });
  std::printf("best epoch %zu  valid_auc %.6f\n", report.best_epoch, report.best_valid_auc);
  if (!data.test.empty()) {
    auto ev = evaluate(model, data.test, rc.train.batch_size, rc.train.eval_cec_rows);
    std::printf("test auc %.6f  logloss %.6f\n", ev.metrics.auc, ev.metrics.logloss);
  }
  save_model(out_path, model);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& report_path) {
  ModelBundle model = load_model(model_path);
  EncodedDataset ds = load_table(data_path, model.config.schema);
  Evaluation ev = evaluate(model, ds);
  nlohmann::json j;
  j["auc"] = ev.metrics.auc;
  j["logloss"] = ev.metrics.logloss;
  j["samples"] = ev.metrics.samples;
  j["cec_pairs"] = nlohmann::json::array();
  for (const auto& p : ev.cec.pairs) j["cec_pairs"].push_back({{"m1", p.m1}, {"m2", p.m2}, {"cec", p.cec}});
  j["cec_sum"] = ev.cec.sum;
  std::ofstream out(report_path);
  if (!out) throw Error("cannot write " + report_path);
  out << j.dump(2) << '\n';
  std::printf("auc %.6f  logloss %.6f  cec_sum %.6f\n", ev.metrics.auc, ev.metrics.logloss, ev.cec.sum);
  return 0;
}

int cmd_cec(const std::string& model_path, const std::string& data_path,
            const std::string& csv_path) {
  ModelBundle model = load_model(model_path);
  EncodedDataset ds = load_table(data_path, model.config.schema);
  Evaluation ev = evaluate(model, ds);
  if (ev.cec.pairs.empty()) throw Error("model has fewer than two experts");
  write_cec_csv(csv_path, ev.cec);
  for (const auto& p : ev.cec.pairs) std::printf("%zu,%zu,%.6f\n", p.m1, p.m2, p.cec);
  return 0;
}

int cmd_gen(const std::string& spec_path, const std::string& out_path) {
  SyntheticSpec spec = synthetic_spec_from(read_key_values(spec_path));
  SyntheticData syn = gen_synthetic(spec);
  save_table(out_path, syn.data);
  syn.generator.save(out_path + ".params");
  std::printf("wrote %zu rows to %s\n", syn.data.size(), out_path.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& config_path) {
  MicroSpec spec = micro_spec_from(read_key_values(config_path));
  GradCheckSuite suite = run_gradcheck_suite(spec);
  for (const auto& c : suite.cases) {
    std::printf("%-40s %s  max_rel_err %.3e\n", c.name.c_str(), c.result.passed ? "ok  " : "FAIL",
                c.result.max_relative_error);
    for (const auto& g : c.result.groups) {
      if (!g.report.passed) {
        std::printf("    %s: coordinate %zu error %.3e\n", g.group.c_str(), g.report.worst_coordinate,
                    g.report.max_relative_error);
      }
    }
  }
  return suite.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"De-correlated mixture-of-experts CTR models"};
  app.require_subcommand(1);

  std::string config, out, model, data, report, csv, spec;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config)->required()->check(CLI::ExistingFile);
  train->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("eval", "evaluate a saved model on a table");
  eval->add_option("--model", model)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data)->required()->check(CLI::ExistingFile);
  eval->add_option("--report", report)->required();

  auto* cec = app.add_subcommand("cec-report", "pairwise cross-expert correlation");
  cec->add_option("--model", model)->required()->check(CLI::ExistingFile);
  cec->add_option("--data", data)->required()->check(CLI::ExistingFile);
  cec->add_option("--csv", csv)->required();

  auto* gen = app.add_subcommand("gen-synth", "write a synthetic table and its generator");
  gen->add_option("--spec", spec)->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out)->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad->add_option("--config", config)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, out);
    if (*eval) return cmd_eval(model, data, report);
    if (*cec) return cmd_cec(model, data, csv);
    if (*gen) return cmd_gen(spec, out);
    if (*grad) return cmd_gradcheck(config);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
