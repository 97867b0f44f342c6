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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dmoe/data.hpp"
#include "dmoe/model.hpp"
#include "dmoe/trainer.hpp"

namespace dmoe {

// "key = value" lines; '#' starts a comment line. Later keys override earlier ones.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

struct DataConfig {
  std::string source = "csv";  // csv | synthetic
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;
  std::filesystem::path table;  // single table split by `split`
  SplitFractions split;
  std::uint64_t split_seed = 2024;
  SyntheticSpec synth;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
};

// Unspecified keys keep the built-in defaults; unknown keys are rejected.
RunConfig parse_run_config(const KeyValues& kv);
RunConfig load_run_config(const std::filesystem::path& path);

// Model-section text; round-trips through parse_key_values + model_config_from.
std::string model_config_to_text(const ModelConfig& config);
ModelConfig model_config_from(const KeyValues& kv);

SyntheticSpec synthetic_spec_from(const KeyValues& kv);

}  // namespace dmoe
