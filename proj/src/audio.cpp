// src/audio.cpp

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

#include "vesper/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace vesper {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
constexpr double kSampleLimit = 1.0001;

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t> &bytes) : bytes_(bytes) {}

  std::int64_t offset() const { return static_cast<std::int64_t>(pos_); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char *what) const {
    if (remaining() < n)
      throw ParseError(std::string("truncated WAV while reading ") + what, offset());
  }
  std::string tag() {
    need(4, "chunk tag");
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + 4));
    pos_ += 4;
    return s;
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2, "u16");
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  void skip(std::size_t n) {
    need(n, "chunk body");
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t> &bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t> &out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

AudioClip decode_wav(const std::vector<std::uint8_t> &bytes, const std::string &source_id) {
  ByteReader r(bytes);
  if (r.tag() != "RIFF") throw ParseError("missing RIFF tag", 0);
  r.u32();  // riff size; not trusted
  if (r.tag() != "WAVE") throw ParseError("missing WAVE tag", 8);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (true) {
    const auto chunk_at = r.offset();
    if (r.remaining() < 8) throw ParseError("no data chunk", chunk_at);
    const auto id = r.tag();
    const auto size = r.u32();
    if (id == "fmt ") {
      if (size < 16) throw ParseError("fmt chunk too small", chunk_at);
      r.need(size, "fmt chunk");
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      std::size_t consumed = 16;
      if (format == kFormatExtensible && size >= 40) {
        r.u16();  // cbSize
        r.u16();  // valid bits
        r.u32();  // channel mask
        format = r.u16();  // first two bytes of the subformat GUID
        consumed += 10;
      }
      r.skip(size - consumed + (size & 1u));
      have_fmt = true;
      continue;
    }
    if (id != "data") {
      r.skip(size + (size & 1u));
      continue;
    }
    if (!have_fmt) throw ParseError("data chunk before fmt chunk", chunk_at);
    if (channels == 0) throw ParseError("zero channels", chunk_at);
    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32)
      throw ParseError("unsupported encoding (format " + std::to_string(format) + ", " +
                           std::to_string(bits) + " bits)",
                       chunk_at);
    if (rate != static_cast<std::uint32_t>(kSampleRate))
      throw UnsupportedRateError(static_cast<int>(rate));
    const std::size_t width = pcm16 ? 2 : 4;
    const std::size_t frame_bytes = width * channels;
    r.need(size, "data chunk");
    if (size % frame_bytes != 0) throw ParseError("data chunk not a whole number of frames", chunk_at);
    const std::size_t frames = size / frame_bytes;
    const std::size_t start = static_cast<std::size_t>(r.offset());

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.source_id = source_id;
    clip.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      double acc = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const std::uint8_t *p = bytes.data() + start + f * frame_bytes + c * width;
        double v;
        if (pcm16) {
          auto s = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
          v = s / 32768.0;
        } else {
          std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) |
                            (static_cast<std::uint32_t>(p[3]) << 24);
          float fv;
          std::memcpy(&fv, &u, 4);
          v = fv;
          if (!std::isfinite(v) || std::abs(v) > kSampleLimit)
            throw ParseError("float sample outside [-1, 1]",
                             static_cast<std::int64_t>(start + f * frame_bytes + c * width));
        }
        acc += v;
      }
      clip.samples[f] = static_cast<float>(acc / channels);
    }
    return clip;
  }
}

AudioClip load_wav(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(const std::vector<std::vector<float>> &channels,
                                     int sample_rate, WavEncoding encoding) {
  if (channels.empty()) throw ContractError("encode_wav: no channels");
  const std::size_t frames = channels[0].size();
  for (const auto &c : channels)
    if (c.size() != frames) throw ContractError("encode_wav: channel lengths differ");
  const std::uint16_t nch = static_cast<std::uint16_t>(channels.size());
  const std::uint16_t width = encoding == WavEncoding::kPcm16 ? 2 : 4;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * nch * width);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, nch);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * nch * width);
  put_u16(out, static_cast<std::uint16_t>(nch * width));
  put_u16(out, static_cast<std::uint16_t>(width * 8));
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (std::size_t f = 0; f < frames; ++f)
    for (const auto &c : channels) {
      if (encoding == WavEncoding::kPcm16) {
        const double scaled = std::round(std::clamp(static_cast<double>(c[f]), -1.0, 1.0) * 32768.0);
        const auto s = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put_u16(out, static_cast<std::uint16_t>(s));
      } else {
        std::uint32_t u;
        std::memcpy(&u, &c[f], 4);
        put_u32(out, u);
      }
    }
  return out;
}

void save_wav(const std::filesystem::path &path, const AudioClip &clip, WavEncoding encoding) {
  auto bytes = encode_wav({clip.samples}, clip.sample_rate, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

AudioClip crop_or_pad(const AudioClip &clip, double duration_s) {
  if (!(duration_s > 0.0)) throw ContractError("crop_or_pad: duration must be positive");
  const auto target = static_cast<std::size_t>(std::llround(duration_s * kSampleRate));
  AudioClip out = clip;
  out.samples.resize(target, 0.0f);
  return out;
}

std::int64_t frame_count(std::int64_t samples, std::int64_t hop) {
  if (hop < 1) throw ContractError("frame_count: hop must be >= 1");
  if (samples <= 0) return 0;
  return (samples + hop - 1) / hop;
}

const char *zone_name(Zone zone) {
  switch (zone) {
    case Zone::kHigh: return "High";
    case Zone::kLow: return "Low";
    case Zone::kNoise: return "Noise";
  }
  return "?";
}

Zone zone_of(double normalized) {
  if (normalized > 0.5) return Zone::kHigh;
  if (normalized > 0.2) return Zone::kLow;
  return Zone::kNoise;
}

EnergyProfile rms_energy(const AudioClip &clip, std::int64_t frame_length, std::int64_t hop) {
  if (frame_length < 1 || hop < 1) throw ContractError("rms_energy: frame length and hop must be >= 1");
  EnergyProfile p;
  p.frame_length = frame_length;
  p.hop = hop;
  const auto n = clip.size();
  const auto frames = frame_count(n, hop);
  p.rms.resize(static_cast<std::size_t>(frames));
  for (std::int64_t f = 0; f < frames; ++f) {
    const auto begin = f * hop;
    const auto end = std::min(n, begin + frame_length);
    double s = 0.0;
    for (auto i = begin; i < end; ++i) {
      const double v = clip.samples[static_cast<std::size_t>(i)];
      s += v * v;
    }
    p.rms[static_cast<std::size_t>(f)] = std::sqrt(s / static_cast<double>(frame_length));
  }
  return p;
}

EnergyProfile normalize_and_zone(EnergyProfile profile) {
  const double mx = profile.rms.empty() ? 0.0 : *std::max_element(profile.rms.begin(), profile.rms.end());
  profile.normalized.resize(profile.rms.size());
  profile.zones.resize(profile.rms.size());
  for (std::size_t f = 0; f < profile.rms.size(); ++f) {
    profile.normalized[f] = mx > 0.0 ? profile.rms[f] / mx : 0.0;
    profile.zones[f] = zone_of(profile.normalized[f]);
  }
  return profile;
}

EnergyProfile energy_profile(const AudioClip &clip, std::int64_t frame_length, std::int64_t hop) {
  return normalize_and_zone(rms_energy(clip, frame_length, hop));
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::int64_t offset = 0;
  while (std::getline(in, line)) {
    const auto line_offset = offset;
    offset += static_cast<std::int64_t>(line.size()) + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw ParseError("manifest line is not JSON: " + std::string(e.what()),
                       line_offset + static_cast<std::int64_t>(e.byte) - 1);
    }
    if (!j.is_object() || !j.contains("path") || !j["path"].is_string())
      throw ParseError("manifest line needs a string \"path\"", line_offset);
    ManifestEntry e;
    std::filesystem::path p = j["path"].get<std::string>();
    e.path = p.is_absolute() ? p : base / p;
    auto text = [&](const char *key) -> std::string {
      if (!j.contains(key) || j[key].is_null()) return "";
      if (!j[key].is_string())
        throw ParseError(std::string("manifest field \"") + key + "\" must be a string", line_offset);
      return j[key].get<std::string>();
    };
    e.label = text("label");
    e.speaker = text("speaker");
    e.split = text("split");
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_manifest(const std::filesystem::path &path, const std::vector<ManifestEntry> &entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  for (const auto &e : entries) {
    auto rel = e.path.lexically_relative(base);
    nlohmann::json j = {{"path", (rel.empty() ? e.path : rel).generic_string()},
                        {"label", e.label},
                        {"speaker", e.speaker},
                        {"split", e.split}};
    out << j.dump() << "\n";
  }
}

}  // namespace vesper
