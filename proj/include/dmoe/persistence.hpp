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

#include "dmoe/model.hpp"

namespace dmoe {

// Layout, all integers little-endian:
//   8 bytes  magic "DMOEMDL\0"
//   u32      format version
//   u64      length of the config echo, then the echo (model config text)
//   u64      block count, then per block: u64 rows, u64 cols, rows*cols f64
// Blocks: expert tables, gating table (one block per field each), then the
// expert, gate and tower parameters in ModelBundle::collect_dense order.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const std::filesystem::path& path, const ModelBundle& model);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace dmoe
