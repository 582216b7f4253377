// include/vesper/run_config.hpp

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

#ifndef VESPER_RUN_CONFIG_HPP_
#define VESPER_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"
#include "vesper/compression.hpp"
#include "vesper/downstream.hpp"
#include "vesper/trainer.hpp"

namespace vesper {

// JSON run configuration:
//
//   {
//     "seed": 0,                       optional, copied into both train sections
//     "pretrain":   { TrainConfig keys },
//     "finetune":   { TrainConfig keys },
//     "downstream": { "mode", "include_x0", "hidden_dim", "select_metric",
//                     "classes", "folds", "fold_mode" },
//     "init":       { "layers", "strategy" },
//     "paths":      { "teacher", "student", "manifest", "out", "classifier" }
//   }
//
// Every section is optional and every key in it too; omitted keys keep their
// defaults. Unknown keys raise ConfigError. Relative paths resolve against
// the directory holding the file. docs/config.schema.json mirrors this.
struct RunConfig {
  TrainConfig pretrain = TrainConfig::pretrain_defaults();
  TrainConfig finetune = TrainConfig::finetune_defaults();
  FinetuneOptions downstream;
  std::int64_t folds = 0;
  FoldMode fold_mode = FoldMode::kBySpeaker;
  std::int64_t init_layers = 4;
  InitStrategy init_strategy = InitStrategy::kExtraction;
  std::map<std::string, std::filesystem::path> paths;

  void set_seed(std::uint64_t seed);
  std::optional<std::filesystem::path> path(const std::string &key) const;
};

RunConfig run_config_from_json(const nlohmann::json &j,
                               const std::filesystem::path &base_dir = {});
nlohmann::json run_config_to_json(const RunConfig &config);
// IoError when unreadable, ConfigError on malformed JSON or bad keys.
RunConfig load_run_config(const std::filesystem::path &path, nlohmann::json *raw = nullptr);

nlohmann::json finetune_options_to_json(const FinetuneOptions &options);

}  // namespace vesper

#endif  // VESPER_RUN_CONFIG_HPP_
