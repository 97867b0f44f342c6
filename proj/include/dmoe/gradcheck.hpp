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
#include <string>
#include <vector>

#include "dmoe/config.hpp"
#include "dmoe/model.hpp"
#include "dmoe/numerics.hpp"

namespace dmoe {

struct GroupCheck {
  std::string group;  // e.g. "expert1.align", "embedding.gating"
  std::size_t coordinates = 0;
  GradCheckReport report;
};

struct ModelGradCheck {
  std::vector<GroupCheck> groups;
  double max_relative_error = 0.0;
  bool passed = true;
};

// Central-difference check of compute_gradients against evaluate_objective,
// run separately for every parameter group of the model. Parameters are
// restored afterwards.
ModelGradCheck full_model_gradcheck(ModelBundle& model, const EncodedDataset& ds,
                                    const Batch& batch, double step, double tol);

// Micro configuration for the gradient suite.
struct MicroSpec {
  std::size_t batch = 6;
  std::size_t fields = 3;
  std::size_t cardinality = 4;
  std::size_t embed_dim = 3;
  std::size_t output_dim = 3;
  double alpha = 0.5;
  std::uint64_t seed = 7;
  double step = 1e-5;
  double tol = 1e-4;
};

MicroSpec micro_spec_from(const KeyValues& kv);

struct SuiteCase {
  std::string name;
  ModelGradCheck result;
};

struct GradCheckSuite {
  std::vector<SuiteCase> cases;
  bool passed() const;
};

// Every expert kind, a heterogeneous mix, shared embedding, every loss form
// and every loss location, each on a two-expert micro model.
GradCheckSuite run_gradcheck_suite(const MicroSpec& spec);

// Micro model and data used by the suite (exposed for tests).
ModelConfig micro_model_config(const MicroSpec& spec, std::vector<ExpertKind> kinds,
                               EmbeddingMode mode, LossConfig loss);
EncodedDataset micro_dataset(const MicroSpec& spec);
// Builds the model and shifts alignment biases positive so that no expert
// output column is constant over the micro batch.
ModelBundle build_micro_model(const ModelConfig& config);

}  // namespace dmoe
