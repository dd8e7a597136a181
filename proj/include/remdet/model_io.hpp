/* Copyright 2026 The remdet-desk Authors. All Rights Reserved.

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

// JSON architecture configs and the RMDT weights format.
//
// RMDT v1, all integers little-endian:
//   "RMDT" | u32 version = 1 | u32 record count
//   per record: u16 name length | name bytes (UTF-8) | u8 dtype (0 = f32,
//   1 = f64) | u8 rank | u32 dims[rank] | raw little-endian scalars
// Records are written in ascending name order, so equal models produce
// identical bytes.

#ifndef REMDET_MODEL_IO_HPP_
#define REMDET_MODEL_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "remdet/model.hpp"

namespace remdet {

// Errors carry a JSON pointer to the offending value in Error::path().
ModelCfg parse_config(std::string_view text);
ModelCfg load_config(const std::filesystem::path& path);
std::string config_to_json(const ModelCfg& cfg, int indent = 2);

inline constexpr std::uint32_t kWeightsVersion = 1;

struct WeightRecord {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<double> values;  // widened; exact for both dtypes
};

template <typename T>
std::vector<std::uint8_t> encode_weights(const ParamStore<T>& params);

// Throws BadMagic, VersionUnsupported, TruncatedFile, ShapeMismatch.
std::vector<WeightRecord> decode_weights(std::span<const std::uint8_t> bytes);

template <typename T>
void save_weights(const Model<T>& model, const std::filesystem::path& path);

// Builds the parameter layout from `cfg` and fills it from the file. The
// stored names and shapes must match the layout exactly. Stored scalars are
// converted to T when the dtypes differ.
template <typename T>
Model<T> load_weights(const std::filesystem::path& path, const ModelCfg& cfg);

template <typename T>
Model<T> model_from_records(const std::vector<WeightRecord>& records, const ModelCfg& cfg);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace remdet

#endif  // REMDET_MODEL_IO_HPP_
