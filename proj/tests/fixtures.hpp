// tests/fixtures.hpp

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

#ifndef VESPER_TESTS_FIXTURES_HPP_
#define VESPER_TESTS_FIXTURES_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "vesper/audio.hpp"
#include "vesper/compression.hpp"
#include "vesper/encoder.hpp"
#include "vesper/trainer.hpp"

namespace vesper::fixtures {

inline EncoderConfig tiny_teacher(std::int64_t layers = 8, std::int64_t d = 32) {
  EncoderConfig c;
  c.num_layers = layers;
  c.dim = d;
  c.heads = 4;
  c.ffn_dim = 2 * d;
  c.frontend = {{32, 10, 5}, {32, 8, 8}, {32, 8, 8}};
  c.role = Role::kTeacher;
  return c;
}

inline EncoderConfig tiny_student(std::int64_t layers = 4, std::int64_t d = 32) {
  auto c = tiny_teacher(layers, d);
  c.role = Role::kStudent;
  return c;
}

// 200 Hz tone (period divides the 320-sample hop) under a slow
// sin^2 envelope from 0.05 to 0.5.
inline AudioClip am_tone(double seconds) {
  AudioClip clip;
  const auto n = static_cast<std::int64_t>(std::llround(seconds * kSampleRate));
  clip.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double env = 0.1 + 0.9 * std::pow(std::sin(M_PI * i / (0.25 * kSampleRate)), 2);
    clip.samples[i] = static_cast<float>(0.5 * env * std::sin(2.0 * M_PI * 200.0 * i / kSampleRate));
  }
  clip.source_id = "am_tone";
  return clip;
}

// 220 Hz tone with the same envelope plus white noise; frames differ.
inline AudioClip varied_tone(double seconds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  AudioClip clip;
  const auto n = static_cast<std::int64_t>(std::llround(seconds * kSampleRate));
  clip.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double env = 0.1 + 0.9 * std::pow(std::sin(M_PI * i / (0.25 * kSampleRate)), 2);
    clip.samples[i] =
        static_cast<float>(0.5 * env * std::sin(2.0 * M_PI * 220.0 * i / kSampleRate) + noise(rng));
  }
  clip.source_id = "varied_tone_" + std::to_string(seed);
  return clip;
}

// Overfit oracle settings: 200 single-clip epochs, cosine 2e-3 -> 2e-5.
inline TrainConfig overfit_config() {
  auto c = TrainConfig::pretrain_defaults();
  c.epochs = 200;
  c.warmup_epochs = 0;
  c.base_lr = 2e-3;
  c.min_lr = 2e-5;
  c.clip_seconds = 2.0;
  return c;
}

// A few epochs over short clips for plumbing tests.
inline TrainConfig quick_config() {
  auto c = TrainConfig::pretrain_defaults();
  c.epochs = 3;
  c.warmup_epochs = 1;
  c.batch_size = 2;
  c.base_lr = 1e-3;
  c.min_lr = 1e-5;
  c.clip_seconds = 1.0;
  return c;
}

inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("vesper_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Teacher, student and manifest of `clips` short clips on disk.
struct PretrainFiles {
  std::filesystem::path dir, teacher, student, manifest;
};

inline PretrainFiles write_pretrain_files(const std::string &name, std::int64_t clips = 3,
                                          double seconds = 1.0) {
  PretrainFiles f;
  f.dir = scratch_dir(name);
  auto teacher = init_random(tiny_teacher(), 7);
  auto student = init_student(teacher, tiny_student(), InitStrategy::kExtraction, 11);
  f.teacher = f.dir / "teacher.vspr";
  f.student = f.dir / "student.vspr";
  save_checkpoint(f.teacher, encoder_checkpoint(teacher));
  save_checkpoint(f.student, encoder_checkpoint(student));
  std::vector<ManifestEntry> entries;
  for (std::int64_t i = 0; i < clips; ++i) {
    auto clip = i == 0 ? am_tone(seconds) : varied_tone(seconds, static_cast<std::uint64_t>(i));
    auto wav = f.dir / ("clip" + std::to_string(i) + ".wav");
    save_wav(wav, clip);
    entries.push_back({wav, i % 2 ? "sad" : "happy", "spk" + std::to_string(i), ""});
  }
  f.manifest = f.dir / "manifest.jsonl";
  save_manifest(f.manifest, entries);
  return f;
}

}  // namespace vesper::fixtures

#endif  // VESPER_TESTS_FIXTURES_HPP_
