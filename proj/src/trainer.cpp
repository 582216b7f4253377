// src/trainer.cpp

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

#include "vesper/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>

#include "vesper/checkpoint.hpp"
#include "vesper/errors.hpp"
#include "vesper/ops.hpp"
#include "json_read.hpp"

namespace vesper {

namespace fs = std::filesystem;
using nlohmann::json;

const char *optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdamW ? "adamw" : "sgd";
}

OptimizerKind parse_optimizer(const std::string &name) {
  if (name == "adamw") return OptimizerKind::kAdamW;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + name + "' (adamw|sgd)");
}

const char *objective_name(TrainObjective objective) {
  return objective == TrainObjective::kHierarchical ? "hierarchical" : "kd";
}

TrainObjective parse_objective(const std::string &name) {
  if (name == "hierarchical") return TrainObjective::kHierarchical;
  if (name == "kd") return TrainObjective::kDistillation;
  throw ConfigError("unknown objective '" + name + "' (hierarchical|kd)");
}

TrainConfig TrainConfig::pretrain_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.epochs = 50;
  c.warmup_epochs = 0;
  c.batch_size = 32;
  c.base_lr = 7e-4;
  c.min_lr = 7e-6;
  c.optimizer.kind = OptimizerKind::kSgd;
  c.optimizer.momentum = 0.9;
  c.optimizer.weight_decay = 0.01;
  c.clip_seconds = 6.5;
  c.checkpoint_every = 0;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string &m) { throw ConfigError(m); };
  auto finite = [](double v) { return std::isfinite(v); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) fail("warmup_epochs must lie in [0, epochs)");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!finite(base_lr) || base_lr <= 0.0) fail("base_lr must be > 0");
  if (!finite(min_lr) || min_lr < 0.0 || min_lr > base_lr) fail("min_lr must lie in [0, base_lr]");
  const auto &o = optimizer;
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0))
    fail("optimizer betas must lie in [0, 1)");
  if (!finite(o.eps) || o.eps <= 0.0) fail("optimizer eps must be > 0");
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!finite(o.weight_decay) || o.weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!finite(clip_seconds) || clip_seconds <= 0.0) fail("clip_seconds must be > 0");
  if (!finite(kd_temperature) || kd_temperature <= 0.0) fail("kd_temperature must be > 0");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  weights.validate();
  mask.validate();
}

namespace {

using detail::read_as;
using detail::require_object;
using detail::unknown_key;

json mask_to_json(const MaskConfig &m) {
  return {{"phoneme_span_ms", m.phoneme_span_ms},
          {"word_span_ms", m.word_span_ms},
          {"phoneme_count", m.phoneme_count},
          {"word_count", m.word_count},
          {"stride_ms", m.stride_ms},
          {"strategy", strategy_name(m.strategy)},
          {"pitch_variation_threshold",
           m.pitch_variation_threshold ? json(*m.pitch_variation_threshold) : json(nullptr)},
          {"seed", m.seed}};
}

MaskConfig mask_from_json(const json &j, MaskConfig m) {
  require_object(j, "mask");
  for (const auto &[k, v] : j.items()) {
    const auto key = "mask." + k;
    if (k == "phoneme_span_ms") m.phoneme_span_ms = read_as<double>(v, key);
    else if (k == "word_span_ms") m.word_span_ms = read_as<double>(v, key);
    else if (k == "phoneme_count") m.phoneme_count = read_as<std::int64_t>(v, key);
    else if (k == "word_count") m.word_count = read_as<std::int64_t>(v, key);
    else if (k == "stride_ms") m.stride_ms = read_as<double>(v, key);
    else if (k == "strategy") m.strategy = parse_strategy(read_as<std::string>(v, key));
    else if (k == "pitch_variation_threshold")
      m.pitch_variation_threshold =
          v.is_null() ? std::nullopt : std::optional<double>(read_as<double>(v, key));
    else if (k == "seed") m.seed = read_as<std::uint64_t>(v, key);
    else unknown_key("mask", k);
  }
  return m;
}

}  // namespace

json train_config_to_json(const TrainConfig &c) {
  const auto &o = c.optimizer;
  return {{"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"min_lr", c.min_lr},
          {"optimizer",
           {{"kind", optimizer_name(o.kind)},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"eps", o.eps},
            {"momentum", o.momentum},
            {"weight_decay", o.weight_decay}}},
          {"seed", c.seed},
          {"loss_weights", {{"l", c.weights.l}, {"h", c.weights.h}, {"x", c.weights.x}}},
          {"mask", mask_to_json(c.mask)},
          {"clip_seconds", c.clip_seconds},
          {"objective", objective_name(c.objective)},
          {"kd_temperature", c.kd_temperature},
          {"lr_per_step", c.lr_per_step},
          {"train_pos_conv", c.train_pos_conv},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const json &j, const TrainConfig &base) {
  require_object(j, "train");
  TrainConfig c = base;
  for (const auto &[k, v] : j.items()) {
    if (k == "epochs") c.epochs = read_as<std::int64_t>(v, k);
    else if (k == "warmup_epochs") c.warmup_epochs = read_as<std::int64_t>(v, k);
    else if (k == "batch_size") c.batch_size = read_as<std::int64_t>(v, k);
    else if (k == "base_lr") c.base_lr = read_as<double>(v, k);
    else if (k == "min_lr") c.min_lr = read_as<double>(v, k);
    else if (k == "optimizer") {
      require_object(v, k);
      for (const auto &[ok, ov] : v.items()) {
        const auto key = "optimizer." + ok;
        if (ok == "kind") c.optimizer.kind = parse_optimizer(read_as<std::string>(ov, key));
        else if (ok == "beta1") c.optimizer.beta1 = read_as<double>(ov, key);
        else if (ok == "beta2") c.optimizer.beta2 = read_as<double>(ov, key);
        else if (ok == "eps") c.optimizer.eps = read_as<double>(ov, key);
        else if (ok == "momentum") c.optimizer.momentum = read_as<double>(ov, key);
        else if (ok == "weight_decay") c.optimizer.weight_decay = read_as<double>(ov, key);
        else unknown_key("optimizer", ok);
      }
    } else if (k == "seed") c.seed = read_as<std::uint64_t>(v, k);
    else if (k == "loss_weights") {
      require_object(v, k);
      for (const auto &[wk, wv] : v.items()) {
        const auto key = "loss_weights." + wk;
        if (wk == "l") c.weights.l = read_as<double>(wv, key);
        else if (wk == "h") c.weights.h = read_as<double>(wv, key);
        else if (wk == "x") c.weights.x = read_as<double>(wv, key);
        else unknown_key("loss_weights", wk);
      }
    } else if (k == "mask") c.mask = mask_from_json(v, c.mask);
    else if (k == "clip_seconds") c.clip_seconds = read_as<double>(v, k);
    else if (k == "objective") c.objective = parse_objective(read_as<std::string>(v, k));
    else if (k == "kd_temperature") c.kd_temperature = read_as<double>(v, k);
    else if (k == "lr_per_step") c.lr_per_step = read_as<bool>(v, k);
    else if (k == "train_pos_conv") c.train_pos_conv = read_as<bool>(v, k);
    else if (k == "checkpoint_every") c.checkpoint_every = read_as<std::int64_t>(v, k);
    else unknown_key("", k);
  }
  return c;
}

double cosine_lr_at(double position, const TrainConfig &c) {
  if (!(position >= 0.0 && position < static_cast<double>(c.epochs)))
    throw ContractError("schedule position " + std::to_string(position) + " outside [0, " +
                        std::to_string(c.epochs) + ")");
  const auto warm = static_cast<double>(c.warmup_epochs);
  if (c.warmup_epochs > 0 && position < warm) return c.base_lr * (position + 1.0) / warm;
  const double t = position - warm;
  const double tc = static_cast<double>(c.epochs - c.warmup_epochs - 1);
  if (tc <= 0.0 || t <= 0.0) return c.base_lr;
  if (t >= tc) return c.min_lr;
  return c.min_lr + 0.5 * (c.base_lr - c.min_lr) * (1.0 + std::cos(M_PI * t / tc));
}

double cosine_lr(std::int64_t epoch, const TrainConfig &c) {
  if (epoch < 0 || epoch >= c.epochs)
    throw ContractError("epoch " + std::to_string(epoch) + " outside [0, " +
                        std::to_string(c.epochs) + ")");
  return cosine_lr_at(static_cast<double>(epoch), c);
}

namespace {

std::vector<double> &slot(std::map<std::string, std::vector<double>> &m, const std::string &name,
                          std::size_t n) {
  auto &s = m[name];
  if (s.empty()) s.assign(n, 0.0);
  if (s.size() != n) throw DimensionError("optimizer state for '" + name + "' has the wrong size");
  return s;
}

void check_param(const std::string &name, const Tensor *t) {
  if (!t || !t->defined()) throw ContractError("optimizer parameter '" + name + "' is undefined");
  if (!t->is_leaf()) throw ContractError("optimizer parameter '" + name + "' is not a leaf");
}

}  // namespace

void adamw_step(const ParamRefs &params, OptimizerState &state, double lr,
                const OptimizerConfig &config) {
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, step);
  const double c2 = 1.0 - std::pow(config.beta2, step);
  const double decay = 1.0 - lr * config.weight_decay;
  for (const auto &[name, t] : params) {
    check_param(name, t);
    auto p = t->mutable_data();
    auto g = t->grad();
    auto &m = slot(state.m, name, p.size());
    auto &v = slot(state.v, name, p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
      p[i] = p[i] * decay - lr * update;
    }
    t->round_to_dtype();
  }
}

void sgd_step(const ParamRefs &params, OptimizerState &state, double lr,
              const OptimizerConfig &config) {
  ++state.step;
  for (const auto &[name, t] : params) {
    check_param(name, t);
    auto p = t->mutable_data();
    auto g = t->grad();
    auto &v = slot(state.m, name, p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = config.momentum * v[i] + g[i] + config.weight_decay * p[i];
      p[i] -= lr * v[i];
    }
    t->round_to_dtype();
  }
}

void optimizer_step(const ParamRefs &params, OptimizerState &state, double lr,
                    const OptimizerConfig &config) {
  if (config.kind == OptimizerKind::kAdamW) adamw_step(params, state, lr, config);
  else sgd_step(params, state, lr, config);
}

void zero_grads(const ParamRefs &params) {
  for (const auto &[name, t] : params) t->zero_grad();
}

std::vector<std::string> pretrain_trainable(const EncoderState &student, const TrainConfig &config) {
  std::vector<std::string> names;
  for (const auto &[name, t] : student.params) {
    if (name.rfind("layers.", 0) == 0 || name.rfind("final_norm.", 0) == 0) names.push_back(name);
    else if (name == "mask_emb" && config.objective == TrainObjective::kHierarchical)
      names.push_back(name);
    else if (name.rfind("pos_conv.", 0) == 0 && config.train_pos_conv) names.push_back(name);
  }
  return names;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x5ee5d0c0ffeeULL;
  for (auto p : parts) h = splitmix(h ^ splitmix(p));
  return h;
}

constexpr std::uint64_t kShuffleTag = 0x5348;
constexpr std::uint64_t kMaskTag = 0x4d41;
constexpr std::uint64_t kPredictorTag = 0x5052;
constexpr std::uint64_t kClassifierTag = 0x434c;

std::vector<std::int64_t> shuffled(std::int64_t n, std::uint64_t seed) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::int64_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[uniform_index(rng, static_cast<std::uint64_t>(i))]);
  return order;
}

void write_line(std::ostream *log, const json &record) {
  if (!log) return;
  *log << record.dump() << '\n';
  log->flush();
}

std::string epoch_file(std::int64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04lld.vspr", static_cast<long long>(epoch));
  return buf;
}

template <typename F>
void parallel_for(std::int64_t n, F &&body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

Checkpoint pretrain_checkpoint(const EncoderState &student, Predictors &predictors,
                               std::int64_t epoch, const TrainConfig &config) {
  auto ckpt = encoder_checkpoint(
      student, {{"kind", "pretrain"}, {"epoch", epoch}, {"train", train_config_to_json(config)}});
  for (auto &[name, t] : predictors.named()) ckpt.tensors[name] = *t;
  return ckpt;
}

PretrainResult pretrain(const EncoderState &teacher, EncoderState student, Predictors predictors,
                        const std::vector<AudioClip> &clips, const TrainConfig &config,
                        const PretrainOptions &options) {
  config.validate();
  if (clips.empty()) throw ContractError("pretraining needs at least one clip");
  if (student.config.role != Role::kStudent)
    throw ContractError("pretraining needs a student encoder (with a mask embedding)");
  const bool hierarchical = config.objective == TrainObjective::kHierarchical;
  const auto n = static_cast<std::int64_t>(clips.size());

  EncoderState frozen_teacher = teacher.clone();
  frozen_teacher.freeze_all();
  const auto teacher_traces = teacher_forward_batch(frozen_teacher, clips);

  const auto trainable = pretrain_trainable(student, config);
  student.set_trainable(trainable);

  std::vector<Tensor> x0(clips.size());
  std::vector<EnergyProfile> profiles(clips.size());
  std::vector<std::vector<double>> pitch(clips.size());
  const bool need_pitch = config.mask.strategy == MaskStrategy::kEnergyPitchGuided;
  parallel_for(n, [&](std::int64_t i) {
    Tape tape;
    x0[i] = conv_frontend(tape, student, clips[i]);
    profiles[i] = energy_profile(clips[i]);
    if (profiles[i].frames() != x0[i].dim(0))
      throw ContractError("energy frames and encoder frames disagree for clip " + std::to_string(i));
    if (need_pitch) pitch[i] = pitch_change_scores(clips[i]);
  });

  ParamRefs params;
  for (const auto &name : trainable) params[name] = &student.param(name);
  for (auto &[name, t] : predictors.named()) {
    t->set_requires_grad(hierarchical);
    if (hierarchical) params[name] = t;
  }

  const std::int64_t batch = std::min(config.batch_size, n);
  const std::int64_t steps_per_epoch = n / batch;

  json header = {{"type", "header"},
                 {"train", train_config_to_json(config)},
                 {"teacher", config_to_json(teacher.config)},
                 {"student", config_to_json(student.config)},
                 {"clips", n},
                 {"batch_size", batch},
                 {"steps_per_epoch", steps_per_epoch},
                 {"trainable", trainable}};
  for (const auto &[k, v] : options.header.items()) header[k] = v;
  write_line(options.log, header);
  for (const auto &w : options.warnings) write_line(options.log, w);

  if (options.checkpoint_dir) fs::create_directories(*options.checkpoint_dir);

  PretrainResult result;
  OptimizerState opt;
  std::int64_t global_step = 0;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled(n, derive_seed({config.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    LossReport epoch_sum;
    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      const double lr = config.lr_per_step
                            ? cosine_lr_at(static_cast<double>(epoch) +
                                               static_cast<double>(s) / static_cast<double>(steps_per_epoch),
                                           config)
                            : cosine_lr(epoch, config);
      zero_grads(params);
      LossReport mean;
      if (!hierarchical) mean.kd = 0.0;
      for (std::int64_t b = 0; b < batch; ++b) {
        const auto i = order[static_cast<std::size_t>(s * batch + b)];
        Tape tape;
        LossTerms terms;
        if (hierarchical) {
          const auto seed = derive_seed({config.seed, config.mask.seed, kMaskTag,
                                         static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(i)});
          const auto plan = build_plan(config.mask, profiles[i], x0[i].dim(0), seed, pitch[i]);
          const auto trace = student_forward(tape, student, x0[i], plan);
          terms = pretraining_loss(tape, trace, teacher_traces[i], predictors, plan, config.weights);
        } else {
          const auto trace = plain_forward(tape, student, x0[i]);
          terms = distillation_loss(tape, trace, teacher_traces[i], config.kd_temperature);
        }
        tape.backward(ops::scale(tape, terms.total, 1.0 / static_cast<double>(batch)));
        const double w = 1.0 / static_cast<double>(batch);
        mean.l_l += w * terms.report.l_l;
        mean.l_h += w * terms.report.l_h;
        mean.l_x += w * terms.report.l_x;
        mean.total += w * terms.report.total;
        if (terms.report.kd) *mean.kd += w * *terms.report.kd;
        mean.masked_p += terms.report.masked_p;
        mean.masked_w += terms.report.masked_w;
      }
      optimizer_step(params, opt, lr, config.optimizer);
      ++global_step;

      json rec = {{"type", "step"}, {"epoch", epoch}, {"step", global_step}, {"lr", lr},
                  {"l_l", mean.l_l}, {"l_h", mean.l_h}, {"l_x", mean.l_x}, {"total", mean.total}};
      if (mean.kd) rec["kd"] = *mean.kd;
      write_line(options.log, rec);
      epoch_sum.l_l += mean.l_l;
      epoch_sum.l_h += mean.l_h;
      epoch_sum.l_x += mean.l_x;
      epoch_sum.total += mean.total;
      result.steps.push_back(mean);
    }

    const double k = 1.0 / static_cast<double>(steps_per_epoch);
    json summary = {{"type", "epoch"},
                    {"epoch", epoch},
                    {"steps", steps_per_epoch},
                    {"lr", cosine_lr(epoch, config)},
                    {"l_l", epoch_sum.l_l * k},
                    {"l_h", epoch_sum.l_h * k},
                    {"l_x", epoch_sum.l_x * k},
                    {"total", epoch_sum.total * k}};
    const bool last = epoch + 1 == config.epochs;
    if (options.checkpoint_dir && config.checkpoint_every > 0 &&
        ((epoch + 1) % config.checkpoint_every == 0 || last)) {
      const auto path = *options.checkpoint_dir / epoch_file(epoch);
      save_checkpoint(path, pretrain_checkpoint(student, predictors, epoch, config));
      result.checkpoints.push_back(path);
      summary["checkpoint"] = path.filename().string();
    }
    write_line(options.log, summary);
  }

  if (options.checkpoint_dir) {
    const auto path = *options.checkpoint_dir / "student.vspr";
    save_checkpoint(path, pretrain_checkpoint(student, predictors, config.epochs - 1, config));
    result.checkpoints.push_back(path);
  }
  student.freeze_all();
  for (auto &[name, t] : predictors.named()) t->set_requires_grad(false);
  result.student = std::move(student);
  result.predictors = std::move(predictors);
  return result;
}

LoadedClips load_clips(const std::vector<ManifestEntry> &entries, double clip_seconds) {
  const auto n = static_cast<std::int64_t>(entries.size());
  std::vector<std::optional<AudioClip>> slots(entries.size());
  std::vector<std::string> errors(entries.size());
  parallel_for(n, [&](std::int64_t i) {
    try {
      slots[i] = crop_or_pad(load_wav(entries[i].path), clip_seconds);
    } catch (const IoError &e) {
      errors[i] = e.what();
    }
  });
  LoadedClips out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (slots[i]) {
      out.clips.push_back(std::move(*slots[i]));
      out.entries.push_back(entries[i]);
    } else {
      out.skipped.push_back(
          {{"type", "warning"}, {"path", entries[i].path.string()}, {"error", errors[i]}});
    }
  }
  if (out.clips.empty())
    throw IoError("none of the " + std::to_string(entries.size()) + " manifest clips could be read");
  return out;
}

namespace {

std::ofstream open_log(const fs::path &path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open log file " + path.string());
  return os;
}

bool has_predictors(const Checkpoint &ckpt) {
  return ckpt.tensors.count("predictor.low.in.weight") != 0;
}

}  // namespace

PretrainResult pretrain_loop(const PretrainJob &job, const TrainConfig &config) {
  config.validate();
  const auto entries = load_manifest(job.manifest);
  if (entries.empty()) throw ContractError("manifest " + job.manifest.string() + " is empty");
  const auto teacher = encoder_from_checkpoint(load_checkpoint(job.teacher));
  const auto student_ckpt = load_checkpoint(job.student);
  auto student = encoder_from_checkpoint(student_ckpt);

  auto predictors = Predictors::create(student.config.dim, teacher.config.dim,
                                       derive_seed({config.seed, kPredictorTag}), student.dtype);
  if (has_predictors(student_ckpt)) {
    for (auto &[name, t] : predictors.named()) {
      auto it = student_ckpt.tensors.find(name);
      if (it == student_ckpt.tensors.end())
        throw ContractError("student checkpoint lacks predictor tensor '" + name + "'");
      if (it->second.shape() != t->shape())
        throw ContractError("predictor tensor '" + name + "' has shape " +
                            shape_to_string(it->second.shape()) + ", expected " +
                            shape_to_string(t->shape()));
      *t = it->second.clone();
    }
  }

  auto loaded = load_clips(entries, config.clip_seconds);
  fs::create_directories(job.out_dir);
  auto log = open_log(job.out_dir / "train.jsonl");

  PretrainOptions options;
  options.log = &log;
  options.checkpoint_dir = job.out_dir;
  options.header = {{"config", job.config_echo},
                    {"manifest", job.manifest.string()},
                    {"skipped", loaded.skipped.size()}};
  options.warnings = loaded.skipped;
  return pretrain(teacher, std::move(student), std::move(predictors), loaded.clips, config, options);
}

std::vector<ForwardTrace> backbone_traces(const EncoderState &backbone,
                                          const std::vector<AudioClip> &clips) {
  EncoderState frozen = backbone.clone();
  frozen.freeze_all();
  return teacher_forward_batch(frozen, clips);
}

namespace {

std::int64_t argmax_row(const Tensor &logits) {
  auto d = logits.data();
  return static_cast<std::int64_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

double pick_metric(const MetricsReport &r, const std::string &metric) {
  if (metric == "wa") return r.wa;
  if (metric == "ua") return r.ua;
  if (metric == "wf1") return r.wf1;
  throw ConfigError("unknown selection metric '" + metric + "' (wa|ua|wf1)");
}

void check_labels(std::span<const std::int64_t> labels, std::size_t count, std::int64_t classes,
                  const char *what) {
  if (labels.size() != count)
    throw ContractError(std::string(what) + ": label count does not match trace count");
  for (auto l : labels)
    if (l < 0 || l >= classes)
      throw ContractError(std::string(what) + ": label " + std::to_string(l) + " outside [0, " +
                          std::to_string(classes) + ")");
}

}  // namespace

MetricsReport evaluate_classifier(const std::vector<ForwardTrace> &traces,
                                  std::span<const std::int64_t> labels, const Classifier &classifier,
                                  const LayerWeighting &weighting, RepMode mode) {
  if (traces.empty()) throw ContractError("evaluation needs at least one clip");
  check_labels(labels, traces.size(), classifier.config.classes, "evaluate");
  std::vector<std::int64_t> predicted(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    Tape tape;
    predicted[i] = argmax_row(classify(tape, select_representation(tape, traces[i], mode, weighting),
                                       classifier));
  }
  auto report = compute_metrics(confusion_matrix(labels, predicted, classifier.config.classes));
  report.mode = rep_mode_name(mode);
  return report;
}

FinetuneResult finetune(const std::vector<ForwardTrace> &train, std::span<const std::int64_t> train_labels,
                        const std::vector<ForwardTrace> &eval, std::span<const std::int64_t> eval_labels,
                        std::int64_t classes, const TrainConfig &config, const FinetuneOptions &options,
                        std::ostream *log) {
  config.validate();
  if (train.empty()) throw ContractError("fine-tuning needs at least one training clip");
  check_labels(train_labels, train.size(), classes, "finetune");
  pick_metric(MetricsReport{}, options.select_metric);
  const auto &probe = train.front();
  if (probe.layers.empty()) throw ContractError("fine-tuning needs traces with layers");
  const DType dtype = probe.x0.dtype();

  FinetuneResult best;
  LayerWeighting weighting = LayerWeighting::uniform(static_cast<std::int64_t>(probe.layers.size()),
                                                     options.include_x0, dtype);
  auto classifier = Classifier::create({probe.x0.dim(1), options.hidden_dim, classes},
                                       derive_seed({config.seed, kClassifierTag}), dtype);
  ParamRefs params;
  for (auto &[name, t] : classifier.params) {
    t.set_requires_grad(true);
    params["classifier." + name] = &t;
  }
  if (options.mode == RepMode::kWeighted) params["weighting.logits"] = &weighting.logits;
  else weighting.logits.set_requires_grad(false);

  const auto n = static_cast<std::int64_t>(train.size());
  const std::int64_t batch = std::min(config.batch_size, n);
  const std::int64_t steps_per_epoch = n / batch;
  const auto &eval_set = eval.empty() ? train : eval;
  const auto eval_lab = eval.empty() ? train_labels : eval_labels;

  write_line(log, {{"type", "header"},
                   {"train", train_config_to_json(config)},
                   {"mode", rep_mode_name(options.mode)},
                   {"include_x0", options.include_x0},
                   {"hidden_dim", options.hidden_dim},
                   {"classes", classes},
                   {"train_clips", n},
                   {"eval_clips", eval_set.size()}});

  OptimizerState opt;
  double best_score = -1.0;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config);
    const auto order = shuffled(n, derive_seed({config.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    double loss_sum = 0.0;
    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      zero_grads(params);
      for (std::int64_t b = 0; b < batch; ++b) {
        const auto i = order[static_cast<std::size_t>(s * batch + b)];
        Tape tape;
        auto rep = select_representation(tape, train[i], options.mode, weighting);
        std::int64_t label = train_labels[i];
        auto ce = ops::cross_entropy(tape, classify(tape, rep, classifier), {&label, 1});
        loss_sum += ce.item();
        tape.backward(ops::scale(tape, ce, 1.0 / static_cast<double>(batch)));
      }
      optimizer_step(params, opt, lr, config.optimizer);
    }
    const auto train_report = evaluate_classifier(train, train_labels, classifier, weighting, options.mode);
    auto report = eval.empty() ? train_report
                               : evaluate_classifier(eval, eval_lab, classifier, weighting, options.mode);
    best.train_accuracy.push_back(train_report.wa);
    best.epochs.push_back(report);
    const double score = pick_metric(report, options.select_metric);
    write_line(log, {{"type", "epoch"},
                     {"epoch", epoch},
                     {"lr", lr},
                     {"train_loss", loss_sum / static_cast<double>(steps_per_epoch * batch)},
                     {"train_accuracy", train_report.wa},
                     {"wa", report.wa},
                     {"ua", report.ua},
                     {"wf1", report.wf1}});
    if (score > best_score) {
      best_score = score;
      best.best_epoch = epoch;
      best.report = report;
      best.classifier = classifier.clone();
      best.weighting = LayerWeighting{weighting.logits.clone(), weighting.include_x0};
    }
  }
  for (auto &[name, t] : best.classifier.params) t.set_requires_grad(false);
  best.weighting.logits.set_requires_grad(false);
  return best;
}

std::vector<std::string> distinct_labels(const std::vector<ManifestEntry> &entries) {
  std::set<std::string> s;
  for (const auto &e : entries) {
    if (e.label.empty()) throw ParseError("manifest entry " + e.path.string() + " has no label", -1);
    s.insert(e.label);
  }
  return {s.begin(), s.end()};
}

std::vector<std::int64_t> label_indices(const std::vector<ManifestEntry> &entries,
                                        const std::vector<std::string> &classes) {
  std::vector<std::int64_t> out;
  out.reserve(entries.size());
  for (const auto &e : entries) {
    auto it = std::find(classes.begin(), classes.end(), e.label);
    if (it == classes.end())
      throw ParseError("manifest entry " + e.path.string() + " has label '" + e.label +
                           "' outside the class set",
                       -1);
    out.push_back(static_cast<std::int64_t>(it - classes.begin()));
  }
  return out;
}

Checkpoint classifier_checkpoint(const FinetuneResult &result, const std::vector<std::string> &classes,
                                 const FinetuneOptions &options) {
  Checkpoint ckpt;
  ckpt.metadata = {{"kind", "classifier"},
                   {"classes", classes},
                   {"mode", rep_mode_name(options.mode)},
                   {"include_x0", options.include_x0},
                   {"input_dim", result.classifier.config.input_dim},
                   {"hidden_dim", result.classifier.config.hidden_dim},
                   {"best_epoch", result.best_epoch},
                   {"report", result.report.to_json()}};
  for (const auto &[name, t] : result.classifier.params) ckpt.tensors["classifier." + name] = t;
  ckpt.tensors["weighting.logits"] = result.weighting.logits;
  return ckpt;
}

namespace {

struct Dataset {
  std::vector<ManifestEntry> entries;
  std::vector<ForwardTrace> traces;
};

Dataset prepare(const fs::path &manifest, const EncoderState &backbone, double clip_seconds) {
  Dataset d;
  d.entries = load_manifest(manifest);
  if (d.entries.empty()) throw ContractError("manifest " + manifest.string() + " is empty");
  std::vector<AudioClip> clips(d.entries.size());
  parallel_for(static_cast<std::int64_t>(clips.size()), [&](std::int64_t i) {
    clips[i] = crop_or_pad(load_wav(d.entries[i].path), clip_seconds);
  });
  d.traces = backbone_traces(backbone, clips);
  return d;
}

template <typename T>
std::vector<T> take(const std::vector<T> &v, const std::vector<std::int64_t> &idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

void split_by_field(const std::vector<ManifestEntry> &entries, std::vector<std::int64_t> &train,
                    std::vector<std::int64_t> &test) {
  for (std::size_t i = 0; i < entries.size(); ++i)
    (entries[i].split == "test" ? test : train).push_back(static_cast<std::int64_t>(i));
  if (train.empty()) throw ContractError("manifest has no training entries (all split 'test')");
}

}  // namespace

FinetuneResult finetune_loop(const FinetuneJob &job, const TrainConfig &config,
                             const FinetuneOptions &options) {
  config.validate();
  const auto backbone = encoder_from_checkpoint(load_checkpoint(job.student));
  auto data = prepare(job.manifest, backbone, config.clip_seconds);
  const auto classes = options.classes.empty() ? distinct_labels(data.entries) : options.classes;
  const auto labels = label_indices(data.entries, classes);
  std::vector<std::int64_t> tr, te;
  split_by_field(data.entries, tr, te);

  std::optional<std::ofstream> log;
  if (job.out_dir) {
    fs::create_directories(*job.out_dir);
    log.emplace(open_log(*job.out_dir / "finetune.jsonl"));
    write_line(&*log, {{"type", "config"}, {"config", job.config_echo}, {"classes", classes}});
  }
  auto result = finetune(take(data.traces, tr), take(labels, tr), take(data.traces, te), take(labels, te),
                         static_cast<std::int64_t>(classes.size()), config, options,
                         log ? &*log : nullptr);
  result.report.class_names = classes;
  if (job.out_dir)
    save_checkpoint(*job.out_dir / "classifier.vspr", classifier_checkpoint(result, classes, options));
  return result;
}

std::vector<MetricsReport> evaluate_run(const EvaluateJob &job, const TrainConfig &config,
                                        const FinetuneOptions &options) {
  config.validate();
  const auto backbone = encoder_from_checkpoint(load_checkpoint(job.student));
  auto data = prepare(job.manifest, backbone, config.clip_seconds);
  std::vector<MetricsReport> reports;

  if (job.classifier) {
    const auto ckpt = load_checkpoint(*job.classifier);
    const auto &meta = ckpt.metadata;
    if (meta.value("kind", "") != "classifier")
      throw ContractError(job.classifier->string() + " is not a classifier checkpoint");
    const auto classes = meta.at("classes").get<std::vector<std::string>>();
    Classifier classifier;
    classifier.config = {meta.at("input_dim").get<std::int64_t>(), meta.at("hidden_dim").get<std::int64_t>(),
                         static_cast<std::int64_t>(classes.size())};
    for (const char *name : {"fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"}) {
      auto it = ckpt.tensors.find(std::string("classifier.") + name);
      if (it == ckpt.tensors.end())
        throw ContractError("classifier checkpoint lacks 'classifier." + std::string(name) + "'");
      classifier.params[name] = it->second;
    }
    LayerWeighting weighting{ckpt.tensors.at("weighting.logits"), meta.at("include_x0").get<bool>()};
    auto report = evaluate_classifier(data.traces, label_indices(data.entries, classes), classifier,
                                      weighting, options.mode);
    report.class_names = classes;
    reports.push_back(std::move(report));
    return reports;
  }

  const auto classes = options.classes.empty() ? distinct_labels(data.entries) : options.classes;
  const auto labels = label_indices(data.entries, classes);
  const auto c = static_cast<std::int64_t>(classes.size());
  if (job.folds >= 2) {
    const auto folds = kfold_split(data.entries, job.folds, job.fold_mode, config.seed);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto &fold = folds[f];
      auto r = finetune(take(data.traces, fold.train), take(labels, fold.train), take(data.traces, fold.test),
                        take(labels, fold.test), c, config, options);
      r.report.fold = static_cast<std::int64_t>(f);
      r.report.class_names = classes;
      reports.push_back(std::move(r.report));
    }
    return reports;
  }
  std::vector<std::int64_t> tr, te;
  split_by_field(data.entries, tr, te);
  auto r = finetune(take(data.traces, tr), take(labels, tr), take(data.traces, te), take(labels, te), c,
                    config, options);
  r.report.class_names = classes;
  reports.push_back(std::move(r.report));
  return reports;
}

}  // namespace vesper
