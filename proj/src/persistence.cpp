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

#include "dmoe/persistence.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "dmoe/config.hpp"

namespace dmoe {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'M', 'O', 'E', 'M', 'D', 'L', '\0'};

static_assert(std::endian::native == std::endian::little,
              "model files are written with native little-endian layout");

std::vector<Matrix*> blocks_of(ModelBundle& model) {
  std::vector<Matrix*> blocks;
  for (auto& t : model.bank.tables)
    for (auto& f : t.fields) blocks.push_back(&f);
  for (auto& f : model.bank.gating.fields) blocks.push_back(&f);
  model.collect_dense(blocks);
  return blocks;
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T take(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) throw Error("truncated model file");
  return value;
}

}  // namespace

void save_model(const std::filesystem::path& path, const ModelBundle& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kModelFormatVersion);
  const std::string echo = model_config_to_text(model.config);
  put<std::uint64_t>(out, echo.size());
  out.write(echo.data(), static_cast<std::streamsize>(echo.size()));
  ModelBundle copy = model;
  const auto blocks = blocks_of(copy);
  put<std::uint64_t>(out, blocks.size());
  for (const Matrix* b : blocks) {
    put<std::uint64_t>(out, b->rows());
    put<std::uint64_t>(out, b->cols());
    out.write(reinterpret_cast<const char*>(b->values().data()),
              static_cast<std::streamsize>(b->size() * sizeof(double)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw Error("unrecognized model file");
  }
  const auto version = take<std::uint32_t>(in);
  if (version != kModelFormatVersion) {
    throw Error("unsupported model file version " + std::to_string(version));
  }
  const auto echo_len = take<std::uint64_t>(in);
  if (echo_len > (1u << 24)) throw Error("corrupt model file: config echo too long");
  std::string echo(echo_len, '\0');
  if (!in.read(echo.data(), static_cast<std::streamsize>(echo_len))) {
    throw Error("truncated model file");
  }
  ModelBundle model = build_model(model_config_from(parse_key_values(echo)));
  const auto blocks = blocks_of(model);
  const auto count = take<std::uint64_t>(in);
  if (count != blocks.size()) throw Error("corrupt model file: block count mismatch");
  for (Matrix* b : blocks) {
    const auto rows = take<std::uint64_t>(in);
    const auto cols = take<std::uint64_t>(in);
    if (rows != b->rows() || cols != b->cols()) throw Error("corrupt model file: block shape mismatch");
    if (!in.read(reinterpret_cast<char*>(b->values().data()),
                 static_cast<std::streamsize>(b->size() * sizeof(double)))) {
      throw Error("truncated model file");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error("corrupt model file: trailing bytes");
  return model;
}

}  // namespace dmoe
