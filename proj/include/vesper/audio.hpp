// include/vesper/audio.hpp

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

#ifndef VESPER_AUDIO_HPP_
#define VESPER_AUDIO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vesper/errors.hpp"

namespace vesper {

inline constexpr int kSampleRate = 16000;
// Samples per encoder frame (20 ms); energy frames use the same length and
// hop so that energy frame f and latent frame f cover the same audio.
inline constexpr std::int64_t kFrameStride = 320;

class UnsupportedRateError : public IoError {
 public:
  explicit UnsupportedRateError(int rate)
      : IoError("unsupported sample rate " + std::to_string(rate) + " Hz (need 16000)"),
        rate_(rate) {}
  int rate() const { return rate_; }

 private:
  int rate_;
};

struct AudioClip {
  std::vector<float> samples;  // mono, nominally within [-1, 1]
  int sample_rate = kSampleRate;
  std::string source_id;

  std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

enum class WavEncoding { kPcm16, kFloat32 };

// RIFF/WAVE, PCM16 little-endian or IEEE float32, any channel count
// (averaged to mono). Non-16 kHz files raise UnsupportedRateError; malformed
// headers raise ParseError carrying the byte offset.
AudioClip load_wav(const std::filesystem::path &path);
AudioClip decode_wav(const std::vector<std::uint8_t> &bytes, const std::string &source_id);
std::vector<std::uint8_t> encode_wav(const std::vector<std::vector<float>> &channels,
                                     int sample_rate, WavEncoding encoding);
void save_wav(const std::filesystem::path &path, const AudioClip &clip,
              WavEncoding encoding = WavEncoding::kPcm16);

// Output length round(duration_s * 16000): head-aligned truncation or zero
// padding at the tail.
AudioClip crop_or_pad(const AudioClip &clip, double duration_s);

// ceil(samples / hop); the encoder front-end yields the same count.
std::int64_t frame_count(std::int64_t samples, std::int64_t hop = kFrameStride);

enum class Zone : std::uint8_t { kHigh, kLow, kNoise };
const char *zone_name(Zone zone);
// High for (0.5, 1], Low for (0.2, 0.5], Noise for [0, 0.2].
Zone zone_of(double normalized);

struct EnergyProfile {
  std::int64_t frame_length = kFrameStride;
  std::int64_t hop = kFrameStride;
  std::vector<double> rms;
  std::vector<double> normalized;  // filled by normalize_and_zone
  std::vector<Zone> zones;         // filled by normalize_and_zone

  std::int64_t frames() const { return static_cast<std::int64_t>(rms.size()); }
};

// Per frame f: sqrt(mean over l of A_f(l)^2), frames starting at f * hop with
// a rectangular window; the trailing partial frame is zero-padded to L.
EnergyProfile rms_energy(const AudioClip &clip, std::int64_t frame_length = kFrameStride,
                         std::int64_t hop = kFrameStride);
// normalized = rms / max(rms); an all-zero profile stays zero (all Noise).
EnergyProfile normalize_and_zone(EnergyProfile profile);

// rms_energy followed by normalize_and_zone.
EnergyProfile energy_profile(const AudioClip &clip, std::int64_t frame_length = kFrameStride,
                             std::int64_t hop = kFrameStride);

// One line of a JSON-lines dataset manifest.
struct ManifestEntry {
  std::filesystem::path path;  // resolved against the manifest directory
  std::string label;
  std::string speaker;
  std::string split;
};

std::vector<ManifestEntry> load_manifest(const std::filesystem::path &path);
void save_manifest(const std::filesystem::path &path, const std::vector<ManifestEntry> &entries);

}  // namespace vesper

#endif  // VESPER_AUDIO_HPP_
