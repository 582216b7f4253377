// include/vesper/checkpoint.hpp

// Copyright 2026 The vesper-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef VESPER_CHECKPOINT_HPP_
#define VESPER_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vesper/encoder.hpp"
#include "vesper/tensor.hpp"

namespace vesper {

// On-disk layout, all integers little-endian:
//
//   "VSPR" | u32 version
//   u32 metadata length | metadata JSON (UTF-8)
//   u32 tensor count
//   per tensor: u32 name length | name (UTF-8) | u8 dtype (0 = f32, 1 = f64)
//               u32 rank | u64 extent * rank | raw values
//   u32 CRC-32 of every byte between the version field and the CRC
//
// Tensors are written in name order, so equal contents give equal bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint &ckpt);
// ParseError (with byte offset) on bad magic, unknown version, truncation,
// duplicate names, malformed metadata or CRC mismatch.
Checkpoint parse_checkpoint(const std::vector<std::uint8_t> &bytes);

// Written to a sibling temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

// Encoder parameters under their own names; the encoder config goes to
// metadata["encoder"].
Checkpoint encoder_checkpoint(const EncoderState &state, nlohmann::json metadata = nlohmann::json::object());
// Rebuilds an encoder from metadata["encoder"] and the tensors it names.
// Other tensors are ignored. Missing or mis-shaped tensors raise
// ContractError naming them.
EncoderState encoder_from_checkpoint(const Checkpoint &ckpt);

}  // namespace vesper

#endif  // VESPER_CHECKPOINT_HPP_
