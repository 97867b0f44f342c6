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
#include <vector>

#include "dmoe/data.hpp"
#include "dmoe/metrics.hpp"
#include "dmoe/model.hpp"
#include "dmoe/optimizer.hpp"

namespace dmoe {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 10000;
  std::size_t epochs = 10;
  std::size_t patience = 2;  // non-improving epochs tolerated before stopping
  std::uint64_t seed = 42;
  std::size_t eval_cec_rows = 100000;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// One optimizer step on a batch. Returns the losses measured before the update.
StepLosses train_step(ModelBundle& model, const EncodedDataset& ds, const Batch& batch,
                      ModelOptimizer& optimizer);

struct Evaluation {
  EvalMetrics metrics;
  CorrelationReport cec;  // empty pairs for single-expert models
};

// AUC and logloss over the whole dataset; CEC over the expert outputs of the
// first cec_rows rows.
Evaluation evaluate(const ModelBundle& model, const EncodedDataset& ds,
                    std::size_t batch_size = 10000, std::size_t cec_rows = 100000);

// Predicted click probabilities for every row.
std::vector<double> predict(const ModelBundle& model, const EncodedDataset& ds,
                            std::size_t batch_size = 10000);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_logloss = 0.0;
  double train_objective = 0.0;
  double valid_auc = 0.0;
  double valid_logloss = 0.0;
  CorrelationReport valid_cec;
  double seconds = 0.0;  // wall clock, excluded from trajectory comparison
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_valid_auc = 0.0;

  // Equality of every deterministic field.
  bool same_trajectory(const TrainReport& other) const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains with per-epoch shuffles seeded seed + epoch, early stopping on
// validation AUC, and restores the parameters of the best epoch.
TrainReport train_loop(ModelBundle& model, const EncodedDataset& train,
                       const EncodedDataset& valid, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

}  // namespace dmoe
