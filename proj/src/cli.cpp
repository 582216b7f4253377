// src/cli.cpp

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

#include "vesper/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "vesper/audio.hpp"
#include "vesper/checkpoint.hpp"
#include "vesper/compression.hpp"
#include "vesper/encoder.hpp"
#include "vesper/errors.hpp"
#include "vesper/masking.hpp"
#include "vesper/run_config.hpp"
#include "vesper/trainer.hpp"

namespace vesper {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t> &flag) {
  if (flag) return flag;
  const char *env = std::getenv("VESPER_SEED");
  if (!env || !*env) return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string s(env);
    if (s.find_first_not_of("0123456789") != std::string::npos) throw std::invalid_argument(s);
    auto v = std::stoull(s, &used);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception &) {
    throw ConfigError(std::string("VESPER_SEED is not an unsigned integer: '") + env + "'");
  }
}

// Config file (or defaults), then the environment seed, then flags.
RunConfig resolve_config(const Common &common, json *raw) {
  RunConfig rc = common.config.empty() ? RunConfig{} : load_run_config(common.config, raw);
  if (auto seed = resolve_seed(common.seed)) rc.set_seed(*seed);
  return rc;
}

fs::path need_path(const RunConfig &rc, const std::string &flag_value, const std::string &key) {
  if (!flag_value.empty()) return flag_value;
  if (auto p = rc.path(key)) return *p;
  throw ConfigError("missing --" + key + " (no flag and no paths." + key + " in the config)");
}

void add_common(CLI::App *cmd, Common &c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "seed (falls back to VESPER_SEED)");
}

json mapping_json(const LayerMapping &map) {
  json rows = json::array();
  for (std::size_t i = 0; i < map.sources.size(); ++i)
    rows.push_back({{"student", i + 1}, {"teacher", {map.sources[i].first, map.sources[i].second}}});
  return rows;
}

EncoderConfig preset_config(const std::string &preset, std::optional<std::int64_t> layers, bool student) {
  EncoderConfig c;
  if (preset == "desk") c = student ? EncoderConfig::desk_student() : EncoderConfig::desk_teacher();
  else if (preset == "base") c = EncoderConfig::wavlm_base();
  else if (preset == "large") c = EncoderConfig::wavlm_large();
  else throw ConfigError("unknown preset '" + preset + "' (desk|base|large)");
  if (layers) c.num_layers = *layers;
  c.role = student ? Role::kStudent : Role::kTeacher;
  c.validate();
  return c;
}

DType parse_dtype(const std::string &s) {
  if (s == "f32") return DType::kF32;
  if (s == "f64") return DType::kF64;
  throw ConfigError("unknown dtype '" + s + "' (f32|f64)");
}

std::string padded_index(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

}  // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"vesper: compact speech encoder pretraining and evaluation", "vesper"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every command");

  // init
  Common init_c;
  std::string init_teacher, init_out, init_strategy;
  std::optional<std::int64_t> init_layers;
  auto *init = app.add_subcommand("init", "build a student from a teacher checkpoint");
  add_common(init, init_c);
  init->add_option("--teacher", init_teacher, "teacher checkpoint");
  init->add_option("--layers", init_layers, "student layer count N (even)");
  init->add_option("--strategy", init_strategy, "extraction|averaging|random");
  init->add_option("--out", init_out, "student checkpoint to write");

  // make-teacher
  Common mt_c;
  std::string mt_preset = "desk", mt_out, mt_dtype = "f64";
  std::optional<std::int64_t> mt_layers;
  auto *make_teacher = app.add_subcommand("make-teacher", "write a randomly initialized teacher");
  add_common(make_teacher, mt_c, false);
  make_teacher->add_option("--preset", mt_preset, "desk|base|large");
  make_teacher->add_option("--layers", mt_layers, "layer count override");
  make_teacher->add_option("--dtype", mt_dtype, "f32|f64");
  make_teacher->add_option("--out", mt_out, "checkpoint to write")->required();

  // pretrain
  Common pt_c;
  std::string pt_teacher, pt_student, pt_manifest, pt_out;
  bool pt_dry = false;
  auto *pretrain_cmd = app.add_subcommand("pretrain", "emotion-guided masked pretraining");
  add_common(pretrain_cmd, pt_c);
  pretrain_cmd->add_option("--teacher", pt_teacher, "teacher checkpoint");
  pretrain_cmd->add_option("--student", pt_student, "student checkpoint from init");
  pretrain_cmd->add_option("--manifest", pt_manifest, "JSON-lines manifest");
  pretrain_cmd->add_option("--out", pt_out, "output directory");
  pretrain_cmd->add_flag("--dry-run", pt_dry, "validate and print the resolved config");

  // finetune
  Common ft_c;
  std::string ft_student, ft_manifest, ft_out, ft_mode;
  auto *finetune_cmd = app.add_subcommand("finetune", "train the downstream classifier");
  add_common(finetune_cmd, ft_c);
  finetune_cmd->add_option("--student", ft_student, "pretrained student checkpoint");
  finetune_cmd->add_option("--manifest", ft_manifest, "labelled JSON-lines manifest");
  finetune_cmd->add_option("--out", ft_out, "output directory");
  finetune_cmd->add_option("--mode", ft_mode, "weighted|last");

  // evaluate
  Common ev_c;
  std::string ev_student, ev_manifest, ev_classifier, ev_mode, ev_fold_mode;
  std::optional<std::int64_t> ev_folds;
  auto *evaluate_cmd = app.add_subcommand("evaluate", "metrics for a student on a labelled manifest");
  add_common(evaluate_cmd, ev_c);
  evaluate_cmd->add_option("--student", ev_student, "pretrained student checkpoint");
  evaluate_cmd->add_option("--manifest", ev_manifest, "labelled JSON-lines manifest");
  evaluate_cmd->add_option("--classifier", ev_classifier, "trained classifier checkpoint");
  evaluate_cmd->add_option("--folds", ev_folds, "k-fold cross-validation (k >= 2)");
  evaluate_cmd->add_option("--fold-mode", ev_fold_mode, "speaker|random");
  evaluate_cmd->add_option("--mode", ev_mode, "weighted|last");

  // inspect-mask
  Common im_c;
  std::string im_wav, im_strategy;
  std::optional<double> im_threshold;
  auto *inspect = app.add_subcommand("inspect-mask", "energy profile and mask plan of one wav");
  add_common(inspect, im_c);
  inspect->add_option("--wav", im_wav, "input wav")->required();
  inspect->add_option("--strategy", im_strategy, "energy|energy_pitch|random");
  inspect->add_option("--pitch-threshold", im_threshold, "pitch variation threshold (Hz)");

  // export-reps
  Common er_c;
  std::string er_student, er_manifest, er_out;
  std::vector<std::string> er_wavs;
  std::optional<double> er_seconds;
  auto *export_reps = app.add_subcommand("export-reps", "dump x_0 and every layer output per clip");
  add_common(export_reps, er_c);
  export_reps->add_option("--student", er_student, "encoder checkpoint");
  export_reps->add_option("--wav", er_wavs, "input wav (repeatable)");
  export_reps->add_option("--manifest", er_manifest, "JSON-lines manifest");
  export_reps->add_option("--out", er_out, "output directory");
  export_reps->add_option("--seconds", er_seconds, "crop or pad clips first");

  // params
  std::string pa_preset = "large";
  std::optional<std::int64_t> pa_layers;
  double pa_seconds = 5.0;
  auto *params_cmd = app.add_subcommand("params", "parameter count and forward MACs");
  params_cmd->add_option("--preset", pa_preset, "desk|base|large");
  params_cmd->add_option("--layers", pa_layers, "student layer count (omit for the full teacher)");
  params_cmd->add_option("--seconds", pa_seconds, "clip length for the MAC count");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (init->parsed()) {
      json raw;
      auto rc = resolve_config(init_c, &raw);
      const auto n = init_layers.value_or(rc.init_layers);
      if (n % 2 != 0 || n < 2) throw ConfigError("N must be even, got " + std::to_string(n));
      const auto strategy = init_strategy.empty() ? rc.init_strategy : parse_init_strategy(init_strategy);
      const auto out_path = need_path(rc, init_out, "out");
      const auto teacher = encoder_from_checkpoint(load_checkpoint(need_path(rc, init_teacher, "teacher")));
      auto cfg = teacher.config;
      cfg.num_layers = n;
      cfg.role = Role::kStudent;
      const auto m = teacher.config.num_layers;
      json mapping = nullptr;
      if (strategy != InitStrategy::kRandom)
        mapping = mapping_json(strategy == InitStrategy::kExtraction ? extraction_map(n, m) : averaging_map(n, m));
      auto student = init_student(teacher, cfg, strategy, rc.pretrain.seed);
      save_checkpoint(out_path, encoder_checkpoint(student, {{"kind", "init"},
                                                             {"strategy", init_strategy_name(strategy)},
                                                             {"teacher_layers", m},
                                                             {"mapping", mapping}}));
      err << "student layer -> teacher layers (" << init_strategy_name(strategy) << ", M=" << m << ")\n";
      if (mapping.is_array())
        for (const auto &row : mapping)
          err << "  " << row["student"] << " -> " << row["teacher"][0] << ".." << row["teacher"][1] << "\n";
      else
        err << "  all layers drawn fresh\n";
      out << json{{"out", out_path.string()},
                  {"strategy", init_strategy_name(strategy)},
                  {"student_layers", n},
                  {"teacher_layers", m},
                  {"mapping", mapping}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (make_teacher->parsed()) {
      const auto seed = resolve_seed(mt_c.seed).value_or(0);
      auto cfg = preset_config(mt_preset, mt_layers, false);
      auto state = init_random(cfg, seed, parse_dtype(mt_dtype));
      save_checkpoint(mt_out, encoder_checkpoint(state, {{"kind", "teacher"}, {"preset", mt_preset}, {"seed", seed}}));
      out << json{{"out", mt_out}, {"layers", cfg.num_layers}, {"params", param_count(cfg)}}.dump() << "\n";
      return kExitOk;
    }

    if (pretrain_cmd->parsed()) {
      json raw = nullptr;
      auto rc = resolve_config(pt_c, &raw);
      if (pt_dry) {
        out << json{{"dry_run", true}, {"config", run_config_to_json(rc)}}.dump(2) << "\n";
        return kExitOk;
      }
      PretrainJob job{need_path(rc, pt_manifest, "manifest"), need_path(rc, pt_teacher, "teacher"),
                      need_path(rc, pt_student, "student"), need_path(rc, pt_out, "out"), raw};
      auto r = pretrain_loop(job, rc.pretrain);
      json files = json::array();
      for (const auto &p : r.checkpoints) files.push_back(p.filename().string());
      if (r.steps.empty()) throw ContractError("pretraining ran no steps");
      err << "pretrained " << r.steps.size() << " steps, total " << r.steps.front().total << " -> "
          << r.steps.back().total << "\n";
      out << json{{"out", job.out_dir.string()},
                  {"log", (job.out_dir / "train.jsonl").string()},
                  {"steps", r.steps.size()},
                  {"first_total", r.steps.front().total},
                  {"final_total", r.steps.back().total},
                  {"checkpoints", files}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (finetune_cmd->parsed()) {
      json raw = nullptr;
      auto rc = resolve_config(ft_c, &raw);
      if (!ft_mode.empty()) rc.downstream.mode = parse_rep_mode(ft_mode);
      FinetuneJob job{need_path(rc, ft_manifest, "manifest"), need_path(rc, ft_student, "student"),
                      need_path(rc, ft_out, "out"), raw};
      auto r = finetune_loop(job, rc.finetune, rc.downstream);
      out << json{{"best_epoch", r.best_epoch},
                  {"classifier", (*job.out_dir / "classifier.vspr").string()},
                  {"report", r.report.to_json()}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (evaluate_cmd->parsed()) {
      auto rc = resolve_config(ev_c, nullptr);
      if (!ev_mode.empty()) rc.downstream.mode = parse_rep_mode(ev_mode);
      EvaluateJob job;
      job.manifest = need_path(rc, ev_manifest, "manifest");
      job.student = need_path(rc, ev_student, "student");
      if (!ev_classifier.empty()) job.classifier = fs::path(ev_classifier);
      else if (auto p = rc.path("classifier")) job.classifier = *p;
      job.folds = ev_folds.value_or(rc.folds);
      if (job.folds == 1 || job.folds < 0) throw ConfigError("--folds must be 0 or >= 2");
      job.fold_mode = ev_fold_mode.empty() ? rc.fold_mode : parse_fold_mode(ev_fold_mode);
      auto reports = evaluate_run(job, rc.finetune, rc.downstream);
      if (reports.size() == 1 && !reports[0].fold) {
        out << reports[0].to_json().dump() << "\n";
        return kExitOk;
      }
      json folds = json::array();
      double wa = 0, ua = 0, wf1 = 0;
      for (const auto &r : reports) {
        folds.push_back(r.to_json());
        wa += r.wa;
        ua += r.ua;
        wf1 += r.wf1;
      }
      const double k = static_cast<double>(reports.size());
      out << json{{"mode", rep_mode_name(rc.downstream.mode)},
                  {"folds", folds},
                  {"mean", {{"wa", wa / k}, {"ua", ua / k}, {"wf1", wf1 / k}}}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (inspect->parsed()) {
      auto rc = resolve_config(im_c, nullptr);
      auto mask = rc.pretrain.mask;
      if (!im_strategy.empty()) mask.strategy = parse_strategy(im_strategy);
      if (im_threshold) mask.pitch_variation_threshold = *im_threshold;
      mask.validate();
      const auto seed = resolve_seed(im_c.seed).value_or(mask.seed);
      const auto clip = load_wav(im_wav);
      const auto profile = energy_profile(clip);
      std::vector<double> pitch;
      if (mask.strategy == MaskStrategy::kEnergyPitchGuided) pitch = pitch_change_scores(clip);
      const auto plan = build_plan(mask, profile, profile.frames(), seed, pitch);
      json zones = json::array();
      std::int64_t counts[3] = {0, 0, 0};
      for (auto z : profile.zones) {
        zones.push_back(zone_name(z));
        ++counts[static_cast<int>(z)];
      }
      const double max_rms = profile.rms.empty() ? 0.0 : *std::max_element(profile.rms.begin(), profile.rms.end());
      out << json{{"wav", im_wav},
                  {"strategy", strategy_name(mask.strategy)},
                  {"seed", seed},
                  {"energy",
                   {{"frames", profile.frames()},
                    {"max_rms", max_rms},
                    {"zone_counts", {{"High", counts[0]}, {"Low", counts[1]}, {"Noise", counts[2]}}},
                    {"zones", zones},
                    {"normalized", profile.normalized}}},
                  {"plan", plan_to_json(plan)}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (export_reps->parsed()) {
      auto rc = resolve_config(er_c, nullptr);
      const auto student = encoder_from_checkpoint(load_checkpoint(need_path(rc, er_student, "student")));
      const auto out_dir = need_path(rc, er_out, "out");
      std::vector<fs::path> wavs(er_wavs.begin(), er_wavs.end());
      if (!er_manifest.empty())
        for (const auto &e : load_manifest(er_manifest)) wavs.push_back(e.path);
      if (wavs.empty()) throw ConfigError("export-reps needs --wav or --manifest");
      std::vector<AudioClip> clips;
      for (const auto &w : wavs) {
        auto clip = load_wav(w);
        clips.push_back(er_seconds ? crop_or_pad(clip, *er_seconds) : clip);
      }
      const auto traces = backbone_traces(student, clips);
      fs::create_directories(out_dir);
      json files = json::array();
      for (std::size_t i = 0; i < traces.size(); ++i) {
        Checkpoint c;
        c.metadata = {{"kind", "representations"},
                      {"source", wavs[i].filename().string()},
                      {"frames", traces[i].x0.dim(0)},
                      {"dim", traces[i].x0.dim(1)}};
        c.tensors["x0"] = traces[i].x0;
        for (std::size_t l = 0; l < traces[i].layers.size(); ++l)
          c.tensors["layer" + std::to_string(l + 1)] = traces[i].layers[l];
        const auto path = out_dir / (padded_index(i) + "_" + wavs[i].stem().string() + ".vspr");
        save_checkpoint(path, c);
        files.push_back({{"path", path.string()}, {"tensors", c.tensors.size()}});
      }
      out << json{{"out", out_dir.string()}, {"files", files}}.dump() << "\n";
      return kExitOk;
    }

    if (params_cmd->parsed()) {
      if (!(pa_seconds > 0.0)) throw ConfigError("--seconds must be > 0");
      const auto cfg = preset_config(pa_preset, pa_layers, pa_layers.has_value());
      const auto samples = static_cast<std::int64_t>(std::llround(pa_seconds * kSampleRate));
      const auto frames = frame_count(samples, cfg.stride_total());
      const auto count = param_count(cfg);
      const auto macs = flops_estimate(cfg, frames);
      err << pa_preset << " N=" << cfg.num_layers << ": " << static_cast<double>(count) / 1e6 << "M params, "
          << macs / 1e9 << "G MACs over " << pa_seconds << " s\n";
      out << json{{"preset", pa_preset},
                  {"layers", cfg.num_layers},
                  {"role", role_name(cfg.role)},
                  {"params", count},
                  {"params_m", static_cast<double>(count) / 1e6},
                  {"seconds", pa_seconds},
                  {"frames", frames},
                  {"macs", macs}}
                 .dump()
          << "\n";
      return kExitOk;
    }
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError &e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError &e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error &e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception &e) {
    err << "failed: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace vesper
