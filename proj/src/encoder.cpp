// src/encoder.cpp

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

#include "vesper/encoder.hpp"

#include <cmath>
#include <set>

#include "vesper/ops.hpp"

namespace vesper {

namespace {

constexpr double kInitStd = 0.02;

const std::vector<ConvStage> kWavlmFrontend = {{512, 10, 5}, {512, 3, 2}, {512, 3, 2}, {512, 3, 2},
                                               {512, 3, 2},  {512, 2, 2}, {512, 2, 2}};

std::string stage_name(std::size_t s, const char *what) {
  return "frontend." + std::string(what) + std::to_string(s);
}

bool ends_with(const std::string &s, const std::string &suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
T get_field(const nlohmann::json &j, const char *key, const T &fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("encoder config field '") + key + "': " + e.what());
  }
}

}  // namespace

const char *role_name(Role role) { return role == Role::kStudent ? "student" : "teacher"; }

std::int64_t EncoderConfig::stride_total() const {
  std::int64_t s = 1;
  for (const auto &st : frontend) s *= st.stride;
  return s;
}

void EncoderConfig::validate() const {
  if (num_layers < 0) throw ConfigError("num_layers must be >= 0");
  if (dim < 1 || heads < 1 || ffn_dim < 1) throw ConfigError("dim, heads and ffn_dim must be positive");
  if (dim % heads != 0)
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  if (frontend.empty()) throw ConfigError("frontend needs at least one stage");
  for (const auto &st : frontend) {
    if (st.channels < 1 || st.kernel < 1 || st.stride < 1)
      throw ConfigError("frontend stage extents must be positive");
    if (st.kernel < st.stride) throw ConfigError("frontend stage kernel must be >= its stride");
  }
  if (pos_conv) {
    if (pos_conv->kernel < 1 || pos_conv->groups < 1) throw ConfigError("pos_conv kernel and groups must be positive");
    if (dim % pos_conv->groups != 0) throw ConfigError("dim must be divisible by pos_conv groups");
  }
  if (role == Role::kStudent && num_layers % 2 != 0)
    throw ConfigError("student layer count must be even (word mask goes after layer N/2), got " +
                      std::to_string(num_layers));
}

EncoderConfig EncoderConfig::desk_student(std::int64_t layers) {
  EncoderConfig c;
  c.num_layers = layers;
  c.role = Role::kStudent;
  return c;
}

EncoderConfig EncoderConfig::desk_teacher(std::int64_t layers) {
  EncoderConfig c;
  c.num_layers = layers;
  c.role = Role::kTeacher;
  return c;
}

EncoderConfig EncoderConfig::wavlm_large() {
  EncoderConfig c;
  c.num_layers = 24;
  c.dim = 1024;
  c.heads = 16;
  c.ffn_dim = 4096;
  c.frontend = kWavlmFrontend;
  c.pos_conv = PosConvConfig{128, 16};
  c.role = Role::kTeacher;
  return c;
}

EncoderConfig EncoderConfig::wavlm_base() {
  auto c = wavlm_large();
  c.num_layers = 12;
  c.dim = 768;
  c.heads = 12;
  c.ffn_dim = 3072;
  return c;
}

EncoderConfig EncoderConfig::vesper(std::int64_t layers) {
  auto c = wavlm_large();
  c.num_layers = layers;
  c.role = Role::kStudent;
  return c;
}

nlohmann::json config_to_json(const EncoderConfig &config) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto &s : config.frontend) stages.push_back({s.channels, s.kernel, s.stride});
  nlohmann::json j = {{"num_layers", config.num_layers},
                      {"dim", config.dim},
                      {"heads", config.heads},
                      {"ffn_dim", config.ffn_dim},
                      {"frontend", stages},
                      {"final_norm", config.final_norm},
                      {"role", role_name(config.role)}};
  if (config.pos_conv)
    j["pos_conv"] = {{"kernel", config.pos_conv->kernel}, {"groups", config.pos_conv->groups}};
  else
    j["pos_conv"] = nullptr;
  return j;
}

EncoderConfig config_from_json(const nlohmann::json &j) {
  if (!j.is_object()) throw ConfigError("encoder config must be a JSON object");
  static const std::set<std::string> known = {"num_layers", "dim",        "heads", "ffn_dim",
                                              "frontend",   "final_norm", "role",  "pos_conv"};
  for (const auto &[k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown encoder config key '" + k + "'");
  EncoderConfig c;
  c.num_layers = get_field(j, "num_layers", c.num_layers);
  c.dim = get_field(j, "dim", c.dim);
  c.heads = get_field(j, "heads", c.heads);
  c.ffn_dim = get_field(j, "ffn_dim", c.ffn_dim);
  c.final_norm = get_field(j, "final_norm", c.final_norm);
  if (j.contains("role")) {
    const auto r = get_field<std::string>(j, "role", "");
    if (r == "student") c.role = Role::kStudent;
    else if (r == "teacher") c.role = Role::kTeacher;
    else throw ConfigError("encoder role must be 'student' or 'teacher', got '" + r + "'");
  }
  if (j.contains("frontend")) {
    const auto &f = j.at("frontend");
    if (!f.is_array()) throw ConfigError("frontend must be an array of [channels, kernel, stride]");
    c.frontend.clear();
    for (const auto &s : f) {
      if (!s.is_array() || s.size() != 3 || !s[0].is_number_integer() || !s[1].is_number_integer() ||
          !s[2].is_number_integer())
        throw ConfigError("frontend stage must be [channels, kernel, stride]");
      c.frontend.push_back({s[0].get<std::int64_t>(), s[1].get<std::int64_t>(), s[2].get<std::int64_t>()});
    }
  }
  if (j.contains("pos_conv")) {
    const auto &p = j.at("pos_conv");
    if (p.is_null()) {
      c.pos_conv.reset();
    } else {
      if (!p.is_object()) throw ConfigError("pos_conv must be an object or null");
      for (const auto &[k, v] : p.items())
        if (k != "kernel" && k != "groups") throw ConfigError("unknown pos_conv key '" + k + "'");
      PosConvConfig pc;
      pc.kernel = get_field(p, "kernel", pc.kernel);
      pc.groups = get_field(p, "groups", pc.groups);
      c.pos_conv = pc;
    }
  }
  c.validate();
  return c;
}

std::string layer_prefix(std::int64_t layer) { return "layers." + std::to_string(layer) + "."; }

bool is_frontend_parameter(const std::string &name) { return name.rfind("frontend.", 0) == 0; }

std::vector<std::pair<std::string, Shape>> parameter_shapes(const EncoderConfig &config) {
  config.validate();
  const auto d = config.dim;
  std::map<std::string, Shape> shapes;
  std::int64_t in_ch = 1;
  for (std::size_t s = 0; s < config.frontend.size(); ++s) {
    const auto &st = config.frontend[s];
    shapes[stage_name(s, "conv") + ".weight"] = {st.channels, in_ch, st.kernel};
    shapes[stage_name(s, "norm") + ".gain"] = {st.channels};
    shapes[stage_name(s, "norm") + ".bias"] = {st.channels};
    in_ch = st.channels;
  }
  shapes["frontend.proj_norm.gain"] = {in_ch};
  shapes["frontend.proj_norm.bias"] = {in_ch};
  shapes["frontend.proj.weight"] = {in_ch, d};
  shapes["frontend.proj.bias"] = {d};
  if (config.pos_conv) {
    shapes["pos_conv.weight"] = {d, d / config.pos_conv->groups, config.pos_conv->kernel};
    shapes["pos_conv.bias"] = {d};
  }
  for (std::int64_t i = 1; i <= config.num_layers; ++i) {
    const auto p = layer_prefix(i);
    for (const char *n : {"attn_norm", "ffn_norm"}) {
      shapes[p + n + ".gain"] = {d};
      shapes[p + n + ".bias"] = {d};
    }
    for (const char *n : {"q", "k", "v", "o"}) {
      shapes[p + "attn." + n + ".weight"] = {d, d};
      shapes[p + "attn." + n + ".bias"] = {d};
    }
    shapes[p + "ffn.in.weight"] = {d, config.ffn_dim};
    shapes[p + "ffn.in.bias"] = {config.ffn_dim};
    shapes[p + "ffn.out.weight"] = {config.ffn_dim, d};
    shapes[p + "ffn.out.bias"] = {d};
  }
  if (config.final_norm) {
    shapes["final_norm.gain"] = {d};
    shapes["final_norm.bias"] = {d};
  }
  if (config.role == Role::kStudent) shapes["mask_emb"] = {d};
  return {shapes.begin(), shapes.end()};
}

std::int64_t param_count(const EncoderConfig &config) {
  std::int64_t n = 0;
  for (const auto &[name, shape] : parameter_shapes(config)) n += shape_numel(shape);
  return n;
}

double flops_estimate(const EncoderConfig &config, std::int64_t frames) {
  config.validate();
  if (frames < 1) throw ContractError("flops_estimate: frames must be >= 1");
  const double d = static_cast<double>(config.dim);
  double macs = 0.0;
  std::int64_t length = frames * config.stride_total();
  std::int64_t in_ch = 1;
  for (const auto &st : config.frontend) {
    length = (length + st.stride - 1) / st.stride;
    macs += static_cast<double>(length) * static_cast<double>(st.channels * in_ch * st.kernel);
    in_ch = st.channels;
  }
  const double T = static_cast<double>(frames);
  macs += T * static_cast<double>(in_ch) * d;
  if (config.pos_conv)
    macs += T * d * (d / static_cast<double>(config.pos_conv->groups)) * static_cast<double>(config.pos_conv->kernel);
  const double per_layer = 4.0 * T * d * d + 2.0 * T * T * d + 2.0 * T * d * static_cast<double>(config.ffn_dim);
  macs += per_layer * static_cast<double>(config.num_layers);
  return macs;
}

const Tensor &EncoderState::param(const std::string &name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("encoder state has no parameter '" + name + "'");
  return it->second;
}

Tensor &EncoderState::param(const std::string &name) {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("encoder state has no parameter '" + name + "'");
  return it->second;
}

void EncoderState::set_trainable(const std::vector<std::string> &names) {
  freeze_all();
  for (const auto &n : names) param(n).set_requires_grad(true);
}

void EncoderState::freeze_all() {
  for (auto &[n, t] : params) t.set_requires_grad(false);
}

EncoderState EncoderState::clone() const {
  EncoderState s;
  s.config = config;
  s.dtype = dtype;
  for (const auto &[n, t] : params) s.params.emplace(n, t.clone());
  return s;
}

EncoderState init_random(const EncoderConfig &config, std::uint64_t seed, DType dtype) {
  EncoderState state;
  state.config = config;
  state.dtype = dtype;
  std::mt19937_64 rng(seed);
  for (const auto &[name, shape] : parameter_shapes(config)) {
    Tensor t;
    if (ends_with(name, ".gain"))
      t = Tensor::full(shape, 1.0, dtype);
    else if (ends_with(name, ".bias"))
      t = Tensor::zeros(shape, dtype);
    else
      t = Tensor::randn(shape, rng, kInitStd, dtype);
    state.params.emplace(name, std::move(t));
  }
  return state;
}

void check_complete(const EncoderState &state) {
  std::string problems;
  std::set<std::string> expected;
  for (const auto &[name, shape] : parameter_shapes(state.config)) {
    expected.insert(name);
    auto it = state.params.find(name);
    if (it == state.params.end()) {
      problems += " missing " + name + ";";
    } else if (it->second.shape() != shape) {
      problems += " " + name + " has shape " + shape_to_string(it->second.shape()) + ", expected " +
                  shape_to_string(shape) + ";";
    } else if (it->second.dtype() != state.dtype) {
      problems += " " + name + " has dtype " + dtype_name(it->second.dtype()) + ";";
    }
  }
  for (const auto &[name, t] : state.params)
    if (!expected.count(name)) problems += " unexpected " + name + ";";
  if (!problems.empty()) throw ContractError("encoder state does not match its config:" + problems);
}

Tensor audio_tensor(const AudioClip &clip, DType dtype) {
  if (clip.samples.empty()) throw ContractError("empty audio clip");
  std::vector<double> v(clip.samples.begin(), clip.samples.end());
  return Tensor::from_values({1, clip.size()}, std::move(v), dtype);
}

Tensor conv_frontend(Tape &tape, const EncoderState &state, const AudioClip &clip) {
  const auto &cfg = state.config;
  if (clip.size() < cfg.stride_total())
    throw ContractError("clip of " + std::to_string(clip.size()) + " samples is shorter than one frame (" +
                        std::to_string(cfg.stride_total()) + " samples)");
  Tensor x = audio_tensor(clip, state.dtype);  // [C x L]
  Tensor rows;                                 // [L x C]
  for (std::size_t s = 0; s < cfg.frontend.size(); ++s) {
    const auto &st = cfg.frontend[s];
    const auto length = x.dim(1);
    const auto out = (length + st.stride - 1) / st.stride;
    ops::Conv1dOptions o;
    o.stride = st.stride;
    o.pad_right = (out - 1) * st.stride + st.kernel - length;
    auto y = ops::conv1d(tape, x, state.param(stage_name(s, "conv") + ".weight"), o);
    rows = ops::transpose(tape, y);
    rows = ops::layer_norm(tape, rows, state.param(stage_name(s, "norm") + ".gain"),
                           state.param(stage_name(s, "norm") + ".bias"));
    rows = ops::gelu(tape, rows);
    if (s + 1 < cfg.frontend.size()) x = ops::transpose(tape, rows);
  }
  rows = ops::layer_norm(tape, rows, state.param("frontend.proj_norm.gain"), state.param("frontend.proj_norm.bias"));
  return ops::linear(tape, rows, state.param("frontend.proj.weight"), state.param("frontend.proj.bias"));
}

Tensor add_positional(Tape &tape, const EncoderState &state, const Tensor &x) {
  const auto &pc = state.config.pos_conv;
  if (!pc) return x;
  ops::Conv1dOptions o;
  o.groups = pc->groups;
  o.pad_left = pc->kernel / 2;
  o.pad_right = pc->kernel - 1 - pc->kernel / 2;
  auto conv = ops::conv1d(tape, ops::transpose(tape, x), state.param("pos_conv.weight"), o);
  auto pos = ops::gelu(tape, ops::add(tape, ops::transpose(tape, conv), state.param("pos_conv.bias")));
  return ops::add(tape, x, pos);
}

Tensor self_attention(Tape &tape, const EncoderState &state, std::int64_t layer, const Tensor &x) {
  const auto p = layer_prefix(layer) + "attn.";
  const auto d = state.config.dim;
  const auto heads = state.config.heads;
  const auto dh = d / heads;
  auto q = ops::linear(tape, x, state.param(p + "q.weight"), state.param(p + "q.bias"));
  auto k = ops::linear(tape, x, state.param(p + "k.weight"), state.param(p + "k.bias"));
  auto v = ops::linear(tape, x, state.param(p + "v.weight"), state.param(p + "v.bias"));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::int64_t h = 0; h < heads; ++h) {
    auto qh = ops::slice_cols(tape, q, h * dh, dh);
    auto kh = ops::slice_cols(tape, k, h * dh, dh);
    auto vh = ops::slice_cols(tape, v, h * dh, dh);
    auto scores = ops::scale(tape, ops::matmul(tape, qh, ops::transpose(tape, kh)), inv);
    outs.push_back(ops::matmul(tape, ops::softmax(tape, scores), vh));
  }
  auto merged = heads == 1 ? outs.front() : ops::concat(tape, outs, 1);
  return ops::linear(tape, merged, state.param(p + "o.weight"), state.param(p + "o.bias"));
}

Tensor transformer_layer(Tape &tape, const EncoderState &state, std::int64_t layer, const Tensor &x) {
  if (layer < 1 || layer > state.config.num_layers)
    throw ContractError("layer " + std::to_string(layer) + " outside [1, " +
                        std::to_string(state.config.num_layers) + "]");
  if (x.rank() != 2 || x.dim(1) != state.config.dim)
    throw DimensionError("transformer layer expects [T x " + std::to_string(state.config.dim) + "], got " +
                         shape_to_string(x.shape()));
  const auto p = layer_prefix(layer);
  auto a = ops::layer_norm(tape, x, state.param(p + "attn_norm.gain"), state.param(p + "attn_norm.bias"));
  auto h = ops::add(tape, x, self_attention(tape, state, layer, a));
  auto f = ops::layer_norm(tape, h, state.param(p + "ffn_norm.gain"), state.param(p + "ffn_norm.bias"));
  f = ops::relu(tape, ops::linear(tape, f, state.param(p + "ffn.in.weight"), state.param(p + "ffn.in.bias")));
  f = ops::linear(tape, f, state.param(p + "ffn.out.weight"), state.param(p + "ffn.out.bias"));
  return ops::add(tape, h, f);
}

Tensor add_mask(Tape &tape, const Tensor &x, const Tensor &mask_emb, std::span<const std::int64_t> rows) {
  return ops::row_replace(tape, x, mask_emb, rows);
}

namespace {

Tensor finish_layer(Tape &tape, const EncoderState &state, std::int64_t layer, Tensor y) {
  if (layer == state.config.num_layers && state.config.final_norm)
    y = ops::layer_norm(tape, y, state.param("final_norm.gain"), state.param("final_norm.bias"));
  return y;
}

}  // namespace

ForwardTrace student_forward(Tape &tape, const EncoderState &state, const Tensor &x0, const MaskPlan &plan) {
  const auto &cfg = state.config;
  if (cfg.role != Role::kStudent) throw ContractError("student_forward needs a student encoder");
  if (cfg.num_layers % 2 != 0 || cfg.num_layers < 2)
    throw ContractError("student layer count must be even and positive");
  if (plan.frames != x0.dim(0))
    throw DimensionError("mask plan covers " + std::to_string(plan.frames) + " frames, latent has " +
                         std::to_string(x0.dim(0)));
  const auto &mk = state.param("mask_emb");
  ForwardTrace trace;
  trace.x0 = x0;
  auto h = add_positional(tape, state, add_mask(tape, x0, mk, plan.I_p));
  const auto half = cfg.num_layers / 2;
  for (std::int64_t i = 1; i <= cfg.num_layers; ++i) {
    if (i == half + 1) h = add_mask(tape, h, mk, plan.I_w);
    h = transformer_layer(tape, state, i, h);
    trace.layers.push_back(finish_layer(tape, state, i, h));
  }
  return trace;
}

ForwardTrace student_forward(Tape &tape, const EncoderState &state, const AudioClip &clip, const MaskPlan &plan) {
  return student_forward(tape, state, conv_frontend(tape, state, clip), plan);
}

ForwardTrace plain_forward(Tape &tape, const EncoderState &state, const Tensor &x0) {
  ForwardTrace trace;
  trace.x0 = x0;
  auto h = add_positional(tape, state, x0);
  for (std::int64_t i = 1; i <= state.config.num_layers; ++i) {
    h = transformer_layer(tape, state, i, h);
    trace.layers.push_back(finish_layer(tape, state, i, h));
  }
  return trace;
}

ForwardTrace teacher_forward(const EncoderState &state, const AudioClip &clip) {
  Tape tape;
  return plain_forward(tape, state, conv_frontend(tape, state, clip));
}

std::vector<ForwardTrace> teacher_forward_batch(const EncoderState &state, const std::vector<AudioClip> &clips) {
  for (const auto &[n, t] : state.params)
    if (t.requires_grad()) throw ContractError("teacher_forward_batch needs a frozen encoder ('" + n + "' is trainable)");
  std::vector<ForwardTrace> out(clips.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(clips.size()); ++i) {
    try {
      out[static_cast<std::size_t>(i)] = teacher_forward(state, clips[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace vesper
