// src/run_config.cpp

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

#include "vesper/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json_read.hpp"
#include "vesper/errors.hpp"

namespace vesper {

namespace fs = std::filesystem;
using detail::read_as;
using detail::require_object;
using detail::unknown_key;
using nlohmann::json;

namespace {

const char *const kPathKeys[] = {"teacher", "student", "manifest", "out", "classifier"};

}  // namespace

void RunConfig::set_seed(std::uint64_t seed) {
  pretrain.seed = seed;
  finetune.seed = seed;
}

std::optional<fs::path> RunConfig::path(const std::string &key) const {
  auto it = paths.find(key);
  if (it == paths.end()) return std::nullopt;
  return it->second;
}

json finetune_options_to_json(const FinetuneOptions &o) {
  return {{"mode", rep_mode_name(o.mode)},
          {"include_x0", o.include_x0},
          {"hidden_dim", o.hidden_dim},
          {"select_metric", o.select_metric},
          {"classes", o.classes}};
}

RunConfig run_config_from_json(const json &j, const fs::path &base_dir) {
  require_object(j, "");
  RunConfig c;
  std::optional<std::uint64_t> seed;
  for (const auto &[k, v] : j.items()) {
    if (k == "seed") {
      seed = read_as<std::uint64_t>(v, k);
    } else if (k == "pretrain") {
      c.pretrain = train_config_from_json(v, c.pretrain);
    } else if (k == "finetune") {
      c.finetune = train_config_from_json(v, c.finetune);
    } else if (k == "downstream") {
      require_object(v, k);
      for (const auto &[dk, dv] : v.items()) {
        const auto key = "downstream." + dk;
        if (dk == "mode") c.downstream.mode = parse_rep_mode(read_as<std::string>(dv, key));
        else if (dk == "include_x0") c.downstream.include_x0 = read_as<bool>(dv, key);
        else if (dk == "hidden_dim") c.downstream.hidden_dim = read_as<std::int64_t>(dv, key);
        else if (dk == "select_metric") c.downstream.select_metric = read_as<std::string>(dv, key);
        else if (dk == "classes") {
          if (!dv.is_array()) throw ConfigError("config key '" + key + "' must be an array");
          c.downstream.classes.clear();
          for (const auto &e : dv) c.downstream.classes.push_back(read_as<std::string>(e, key));
        } else if (dk == "folds") c.folds = read_as<std::int64_t>(dv, key);
        else if (dk == "fold_mode") c.fold_mode = parse_fold_mode(read_as<std::string>(dv, key));
        else unknown_key("downstream", dk);
      }
    } else if (k == "init") {
      require_object(v, k);
      for (const auto &[ik, iv] : v.items()) {
        const auto key = "init." + ik;
        if (ik == "layers") c.init_layers = read_as<std::int64_t>(iv, key);
        else if (ik == "strategy") c.init_strategy = parse_init_strategy(read_as<std::string>(iv, key));
        else unknown_key("init", ik);
      }
    } else if (k == "paths") {
      require_object(v, k);
      for (const auto &[pk, pv] : v.items()) {
        if (std::find(std::begin(kPathKeys), std::end(kPathKeys), pk) == std::end(kPathKeys))
          unknown_key("paths", pk);
        fs::path p = read_as<std::string>(pv, "paths." + pk);
        c.paths[pk] = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      }
    } else {
      unknown_key("", k);
    }
  }
  if (seed) c.set_seed(*seed);
  c.pretrain.validate();
  c.finetune.validate();
  if (c.downstream.hidden_dim < 1) throw ConfigError("downstream.hidden_dim must be >= 1");
  if (c.downstream.select_metric != "wa" && c.downstream.select_metric != "ua" &&
      c.downstream.select_metric != "wf1")
    throw ConfigError("downstream.select_metric must be wa, ua or wf1");
  if (c.folds < 0 || c.folds == 1) throw ConfigError("downstream.folds must be 0 or >= 2");
  if (c.init_layers < 2 || c.init_layers % 2) throw ConfigError("init.layers: N must be even and >= 2");
  return c;
}

json run_config_to_json(const RunConfig &c) {
  auto downstream = finetune_options_to_json(c.downstream);
  downstream["folds"] = c.folds;
  downstream["fold_mode"] = fold_mode_name(c.fold_mode);
  json paths = json::object();
  for (const auto &[k, p] : c.paths) paths[k] = p.string();
  return {{"pretrain", train_config_to_json(c.pretrain)},
          {"finetune", train_config_to_json(c.finetune)},
          {"downstream", downstream},
          {"init", {{"layers", c.init_layers}, {"strategy", init_strategy_name(c.init_strategy)}}},
          {"paths", paths}};
}

RunConfig load_run_config(const fs::path &path, json *raw) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error &e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (raw) *raw = j;
  return run_config_from_json(j, path.parent_path());
}

}  // namespace vesper
