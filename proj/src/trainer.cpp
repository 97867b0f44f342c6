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

#include "dmoe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace dmoe {

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (batch_size < 1) throw Error("batch size must be at least 1");
}

StepLosses train_step(ModelBundle& model, const EncodedDataset& ds, const Batch& batch,
                      ModelOptimizer& optimizer) {
  GradientResult r = compute_gradients(model, ds, batch);
  optimizer.step(model, r.grads);
  return r.losses;
}

std::vector<double> predict(const ModelBundle& model, const EncodedDataset& ds,
                            std::size_t batch_size) {
  std::vector<double> probs;
  probs.reserve(ds.size());
  for (const auto& b : make_batches(ds, batch_size, std::nullopt)) {
    const ForwardPass fwd = forward_full(model, ds, b);
    probs.insert(probs.end(), fwd.probs.begin(), fwd.probs.end());
  }
  return probs;
}

Evaluation evaluate(const ModelBundle& model, const EncodedDataset& ds, std::size_t batch_size,
                    std::size_t cec_rows) {
  if (ds.empty()) throw Error("evaluation dataset is empty");
  const std::size_t m = model.experts.size();
  const std::size_t kept = std::min(cec_rows, ds.size());
  std::vector<Matrix> outputs(m, Matrix(kept, model.config.expert_output_dim));
  std::vector<double> probs;
  probs.reserve(ds.size());
  std::size_t row = 0;
  for (const auto& b : make_batches(ds, batch_size, std::nullopt)) {
    const ForwardPass fwd = forward_full(model, ds, b);
    probs.insert(probs.end(), fwd.probs.begin(), fwd.probs.end());
    for (std::size_t i = 0; i < b.size() && row + i < kept; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        auto src = fwd.experts[k].output.row(i);
        std::copy(src.begin(), src.end(), outputs[k].row(row + i).begin());
      }
    }
    row += b.size();
  }
  Evaluation ev;
  ev.metrics.samples = ds.size();
  ev.metrics.auc = auc(probs, ds.labels());
  ev.metrics.logloss = bce(probs, ds.labels()).value;
  if (m >= 2 && kept >= 2) {
    ev.cec = cec_report(outputs);
  } else {
    ev.cec.num_experts = m;
  }
  return ev;
}

bool TrainReport::same_trajectory(const TrainReport& other) const {
  if (best_epoch != other.best_epoch || best_valid_auc != other.best_valid_auc) return false;
  if (epochs.size() != other.epochs.size()) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || a.train_logloss != b.train_logloss ||
        a.train_objective != b.train_objective || a.valid_auc != b.valid_auc ||
        a.valid_logloss != b.valid_logloss || !(a.valid_cec == b.valid_cec)) {
      return false;
    }
  }
  return true;
}

TrainReport train_loop(ModelBundle& model, const EncodedDataset& train,
                       const EncodedDataset& valid, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty() || valid.empty()) throw Error("training and validation sets must be nonempty");
  const bool decorrelating = model.config.loss.active();
  if (decorrelating && config.batch_size < 2) throw Error("batch too small for de-correlation");

  ModelOptimizer optimizer(model, config.adam);
  TrainReport report;
  ModelBundle best = model;
  double best_auc = -1.0;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    auto batches = make_batches(train, config.batch_size, config.seed + epoch);
    // A trailing single-row batch has no sample std; it is skipped while de-correlating.
    if (decorrelating && !batches.empty() && batches.back().size() < 2) batches.pop_back();

    double bce_sum = 0.0;
    double obj_sum = 0.0;
    std::size_t rows = 0;
    for (const auto& b : batches) {
      const StepLosses l = train_step(model, train, b, optimizer);
      bce_sum += l.bce * static_cast<double>(b.size());
      obj_sum += l.objective * static_cast<double>(b.size());
      rows += b.size();
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_logloss = rows ? bce_sum / static_cast<double>(rows) : 0.0;
    rec.train_objective = rows ? obj_sum / static_cast<double>(rows) : 0.0;
    const Evaluation ev = evaluate(model, valid, config.batch_size, config.eval_cec_rows);
    rec.valid_auc = ev.metrics.auc;
    rec.valid_logloss = ev.metrics.logloss;
    rec.valid_cec = ev.cec;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.valid_auc > best_auc) {
      best_auc = rec.valid_auc;
      report.best_epoch = epoch;
      best = model;
      stale = 0;
    } else if (++stale > config.patience) {
      break;
    }
  }
  report.best_valid_auc = best_auc;
  model = std::move(best);
  return report;
}

}  // namespace dmoe
