// include/vesper/encoder.hpp

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

#ifndef VESPER_ENCODER_HPP_
#define VESPER_ENCODER_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vesper/audio.hpp"
#include "vesper/masking.hpp"
#include "vesper/tensor.hpp"

namespace vesper {

enum class Role { kStudent, kTeacher };
const char *role_name(Role role);

struct ConvStage {
  std::int64_t channels = 0;
  std::int64_t kernel = 0;
  std::int64_t stride = 0;
  bool operator==(const ConvStage &) const = default;
};

struct PosConvConfig {
  std::int64_t kernel = 16;
  std::int64_t groups = 4;
  bool operator==(const PosConvConfig &) const = default;
};

struct EncoderConfig {
  std::int64_t num_layers = 4;
  std::int64_t dim = 64;
  std::int64_t heads = 4;
  std::int64_t ffn_dim = 256;
  std::vector<ConvStage> frontend = {{32, 10, 5}, {32, 8, 8}, {32, 8, 8}};
  std::optional<PosConvConfig> pos_conv = PosConvConfig{};
  // LayerNorm applied to the output of the last layer.
  bool final_norm = true;
  Role role = Role::kStudent;

  std::int64_t stride_total() const;
  // Throws ConfigError. Students additionally need an even layer count.
  void validate() const;
  bool operator==(const EncoderConfig &) const = default;

  // d=64, h=4, ffn=256, three-stage frontend of total stride 320.
  static EncoderConfig desk_student(std::int64_t layers = 4);
  static EncoderConfig desk_teacher(std::int64_t layers = 8);
  // Large-model geometry (d=1024, 16 heads, ffn=4096) with a 7-stage
  // frontend of 512 channels and a 128-tap, 16-group positional conv.
  static EncoderConfig wavlm_large();
  static EncoderConfig wavlm_base();
  static EncoderConfig vesper(std::int64_t layers);
};

nlohmann::json config_to_json(const EncoderConfig &config);
// Rejects unknown keys with ConfigError.
EncoderConfig config_from_json(const nlohmann::json &j);

// Parameter names and shapes in sorted name order. Layers are numbered from
// 1. Linear weights are stored [in x out]; conv weights [out x in/groups x k].
//
//   frontend.conv{s}.weight            frontend.norm{s}.gain / .bias
//   frontend.proj_norm.gain / .bias    frontend.proj.weight / .bias
//   pos_conv.weight / .bias
//   layers.{i}.attn_norm.gain / .bias  layers.{i}.attn.{q,k,v,o}.weight / .bias
//   layers.{i}.ffn_norm.gain / .bias   layers.{i}.ffn.{in,out}.weight / .bias
//   final_norm.gain / .bias            mask_emb (student only)
std::vector<std::pair<std::string, Shape>> parameter_shapes(const EncoderConfig &config);
std::string layer_prefix(std::int64_t layer);  // "layers.3."
bool is_frontend_parameter(const std::string &name);

std::int64_t param_count(const EncoderConfig &config);
// Multiply-accumulate count of one forward pass over `frames` latent frames
// (frames * stride_total input samples): frontend convolutions and
// projection, positional conv, q/k/v/o and FFN projections, and the two
// attention products. Elementwise work is not counted.
double flops_estimate(const EncoderConfig &config, std::int64_t frames);

struct EncoderState {
  EncoderConfig config;
  DType dtype = DType::kF64;
  std::map<std::string, Tensor> params;

  const Tensor &param(const std::string &name) const;
  Tensor &param(const std::string &name);
  bool has(const std::string &name) const { return params.count(name) != 0; }
  // Marks exactly the listed parameters as requiring gradients.
  void set_trainable(const std::vector<std::string> &names);
  void freeze_all();
  EncoderState clone() const;
};

// normal(0, 0.02) for weights and the mask embedding, zeros for biases, ones
// for norm gains. Draws happen in sorted parameter-name order.
EncoderState init_random(const EncoderConfig &config, std::uint64_t seed,
                         DType dtype = DType::kF64);
// Throws ContractError naming every missing, unexpected or mis-shaped tensor.
void check_complete(const EncoderState &state);

struct ForwardTrace {
  Tensor x0;                   // frontend output, before positional conv
  std::vector<Tensor> layers;  // output of layers 1..N (final norm folded into the last)
};

Tensor audio_tensor(const AudioClip &clip, DType dtype);

// Frontend stages (conv, LayerNorm over channels, GELU), then LayerNorm and
// a projection to d. Returns [T x d] with T = ceil(len / stride_total).
Tensor conv_frontend(Tape &tape, const EncoderState &state, const AudioClip &clip);
// x + GELU(grouped conv over time of x + bias), "same" length.
Tensor add_positional(Tape &tape, const EncoderState &state, const Tensor &x);
Tensor self_attention(Tape &tape, const EncoderState &state, std::int64_t layer, const Tensor &x);
// Pre-norm block: h = x + MSA(LN(x)); h + FFN(LN(h)) with a ReLU FFN.
Tensor transformer_layer(Tape &tape, const EncoderState &state, std::int64_t layer,
                         const Tensor &x);
Tensor add_mask(Tape &tape, const Tensor &x, const Tensor &mask_emb,
                std::span<const std::int64_t> rows);

// x'_0 = add_mask(x_0, MK, I_p), positional conv, layers 1..N/2,
// word mask on x'_{N/2}, layers N/2+1..N. layers[N/2 - 1] is x'_{N/2}
// before the word mask.
ForwardTrace student_forward(Tape &tape, const EncoderState &state, const Tensor &x0,
                             const MaskPlan &plan);
ForwardTrace student_forward(Tape &tape, const EncoderState &state, const AudioClip &clip,
                             const MaskPlan &plan);
// No masks; any role.
ForwardTrace plain_forward(Tape &tape, const EncoderState &state, const Tensor &x0);
ForwardTrace teacher_forward(const EncoderState &state, const AudioClip &clip);
// Teacher traces for many clips; clips are independent and run in parallel.
std::vector<ForwardTrace> teacher_forward_batch(const EncoderState &state,
                                                const std::vector<AudioClip> &clips);

}  // namespace vesper

#endif  // VESPER_ENCODER_HPP_
