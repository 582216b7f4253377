// include/vesper/trainer.hpp

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

#ifndef VESPER_TRAINER_HPP_
#define VESPER_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vesper/audio.hpp"
#include "vesper/checkpoint.hpp"
#include "vesper/downstream.hpp"
#include "vesper/encoder.hpp"
#include "vesper/masking.hpp"
#include "vesper/objectives.hpp"

namespace vesper {

enum class OptimizerKind { kAdamW, kSgd };
const char *optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string &name);  // "adamw" | "sgd"

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  double weight_decay = 0.01;
};

enum class TrainObjective { kHierarchical, kDistillation };
const char *objective_name(TrainObjective objective);
TrainObjective parse_objective(const std::string &name);  // "hierarchical" | "kd"

struct TrainConfig {
  std::int64_t epochs = 100;
  std::int64_t warmup_epochs = 5;
  std::int64_t batch_size = 32;
  double base_lr = 5e-4;
  double min_lr = 5e-6;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  LossWeights weights;
  MaskConfig mask;
  double clip_seconds = 5.0;
  TrainObjective objective = TrainObjective::kHierarchical;
  double kd_temperature = 2.0;
  // Recompute the cosine schedule at fractional epochs every step.
  bool lr_per_step = false;
  bool train_pos_conv = true;
  // Write epoch_NNNN.vspr every this many epochs; 0 writes only the final one.
  std::int64_t checkpoint_every = 1;

  static TrainConfig pretrain_defaults();
  // SGD with momentum, 50 epochs, no warmup, lr 7e-4 -> 7e-6, 6.5 s clips.
  static TrainConfig finetune_defaults();
  void validate() const;  // ConfigError
};

nlohmann::json train_config_to_json(const TrainConfig &config);
// Keys absent from `j` keep the value from `base`; unknown keys raise
// ConfigError.
TrainConfig train_config_from_json(const nlohmann::json &j, const TrainConfig &base);

// Learning rate for a whole epoch: base * (epoch + 1) / warmup during
// warmup, then cosine from base (at epoch = warmup) down to min (at the last
// epoch). ContractError outside [0, epochs).
double cosine_lr(std::int64_t epoch, const TrainConfig &config);
// Same curve at a fractional epoch position in [0, epochs).
double cosine_lr_at(double position, const TrainConfig &config);

struct OptimizerState {
  std::int64_t step = 0;
  std::map<std::string, std::vector<double>> m;  // AdamW first moment, SGD velocity
  std::map<std::string, std::vector<double>> v;  // AdamW second moment
};

using ParamRefs = std::map<std::string, Tensor *>;

// Both read each parameter's accumulated gradient. Parameters are updated in
// place and re-rounded to their dtype.
void adamw_step(const ParamRefs &params, OptimizerState &state, double lr,
                const OptimizerConfig &config);
// v = momentum * v + g + wd * p; p -= lr * v.
void sgd_step(const ParamRefs &params, OptimizerState &state, double lr,
              const OptimizerConfig &config);
void optimizer_step(const ParamRefs &params, OptimizerState &state, double lr,
                    const OptimizerConfig &config);
void zero_grads(const ParamRefs &params);

// Names of the student parameters updated during pretraining.
std::vector<std::string> pretrain_trainable(const EncoderState &student, const TrainConfig &config);

struct PretrainOptions {
  std::ostream *log = nullptr;  // JSON lines
  std::optional<std::filesystem::path> checkpoint_dir;
  nlohmann::json header = nlohmann::json::object();  // merged into the log header
  std::vector<nlohmann::json> warnings;               // logged after the header
};

struct PretrainResult {
  EncoderState student;
  Predictors predictors;
  std::vector<LossReport> steps;  // batch means, one per optimizer step
  std::vector<std::filesystem::path> checkpoints;
};

// Clips must already be cropped. Teacher traces and frontend outputs are
// computed once; masks are redrawn for every clip in every epoch.
PretrainResult pretrain(const EncoderState &teacher, EncoderState student, Predictors predictors,
                        const std::vector<AudioClip> &clips, const TrainConfig &config,
                        const PretrainOptions &options = {});

// Student encoder plus predictor tensors, with the epoch and config in the
// metadata.
Checkpoint pretrain_checkpoint(const EncoderState &student, Predictors &predictors,
                               std::int64_t epoch, const TrainConfig &config);

struct LoadedClips {
  std::vector<AudioClip> clips;
  std::vector<ManifestEntry> entries;   // entries that loaded
  std::vector<nlohmann::json> skipped;  // {"type":"warning","path","error"}
};

// Loads and crops every entry. Unreadable clips are skipped and reported;
// IoError when none load.
LoadedClips load_clips(const std::vector<ManifestEntry> &entries, double clip_seconds);

struct PretrainJob {
  std::filesystem::path manifest;
  std::filesystem::path teacher;
  std::filesystem::path student;
  std::filesystem::path out_dir;  // train.jsonl, epoch_NNNN.vspr, student.vspr
  nlohmann::json config_echo;     // config as given, copied into the log header
};

PretrainResult pretrain_loop(const PretrainJob &job, const TrainConfig &config);

struct FinetuneOptions {
  RepMode mode = RepMode::kWeighted;
  bool include_x0 = true;
  std::int64_t hidden_dim = 256;
  std::string select_metric = "wa";  // wa | ua | wf1
  std::vector<std::string> classes;  // empty: sorted distinct training labels
};

struct FinetuneResult {
  Classifier classifier;
  LayerWeighting weighting;
  std::int64_t best_epoch = 0;
  MetricsReport report;  // evaluation metrics of the best epoch
  std::vector<double> train_accuracy;
  std::vector<MetricsReport> epochs;
};

// Trains the weighting (Weighted mode) and classifier with cross-entropy
// on precomputed backbone traces; the backbone is never touched.
FinetuneResult finetune(const std::vector<ForwardTrace> &train, std::span<const std::int64_t> train_labels,
                        const std::vector<ForwardTrace> &eval, std::span<const std::int64_t> eval_labels,
                        std::int64_t classes, const TrainConfig &config, const FinetuneOptions &options,
                        std::ostream *log = nullptr);

MetricsReport evaluate_classifier(const std::vector<ForwardTrace> &traces, std::span<const std::int64_t> labels,
                                  const Classifier &classifier, const LayerWeighting &weighting,
                                  RepMode mode);

// Class index per entry; ParseError naming the entry when a label is not in
// `classes`.
std::vector<std::int64_t> label_indices(const std::vector<ManifestEntry> &entries,
                                        const std::vector<std::string> &classes);
std::vector<std::string> distinct_labels(const std::vector<ManifestEntry> &entries);

// Plain forward of every clip through a frozen backbone, in parallel.
std::vector<ForwardTrace> backbone_traces(const EncoderState &backbone, const std::vector<AudioClip> &clips);

Checkpoint classifier_checkpoint(const FinetuneResult &result, const std::vector<std::string> &classes,
                                 const FinetuneOptions &options);

struct FinetuneJob {
  std::filesystem::path manifest;
  std::filesystem::path student;
  std::optional<std::filesystem::path> out_dir;  // finetune.jsonl, classifier.vspr
  nlohmann::json config_echo;
};

// Entries whose split is "test" are held out for evaluation; without any,
// the training entries are evaluated.
FinetuneResult finetune_loop(const FinetuneJob &job, const TrainConfig &config,
                             const FinetuneOptions &options);

struct EvaluateJob {
  std::filesystem::path manifest;
  std::filesystem::path student;
  std::optional<std::filesystem::path> classifier;  // trained classifier checkpoint
  std::int64_t folds = 0;                           // >= 2: k-fold fine-tuning in-call
  FoldMode fold_mode = FoldMode::kBySpeaker;
};

// With a classifier checkpoint: metrics over the whole manifest. With
// folds >= 2: one report per fold, each from a fresh fine-tune. Otherwise
// the split rule of finetune_loop.
std::vector<MetricsReport> evaluate_run(const EvaluateJob &job, const TrainConfig &config,
                                        const FinetuneOptions &options);

}  // namespace vesper

#endif  // VESPER_TRAINER_HPP_
