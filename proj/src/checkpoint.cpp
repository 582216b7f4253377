// src/checkpoint.cpp

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

#include "vesper/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>

namespace vesper {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'P', 'R'};
constexpr std::size_t kHeaderBytes = 8;

class Writer {
 public:
  std::vector<std::uint8_t> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void raw(const std::string &s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t> &bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::size_t pos() const { return pos_; }
  void need(std::size_t n, const char *what) const {
    if (end_ - pos_ < n) throw ParseError(std::string("checkpoint truncated while reading ") + what,
                                          static_cast<std::int64_t>(pos_));
  }
  std::uint64_t le(int n, const char *what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string text(std::size_t n, const char *what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

 private:
  const std::vector<std::uint8_t> &bytes_;
  std::size_t end_;
  std::size_t pos_ = kHeaderBytes;
};

std::uint32_t crc_of(const std::uint8_t *data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint &ckpt) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  const auto meta = ckpt.metadata.dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto &[name, t] : ckpt.tensors) {
    if (name.empty()) throw ContractError("checkpoint tensor names must be non-empty");
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(t.dtype()));
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.u64(static_cast<std::uint64_t>(e));
    for (double v : t.data()) {
      if (t.dtype() == DType::kF32)
        w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        w.u64(std::bit_cast<std::uint64_t>(v));
    }
  }
  w.u32(crc_of(w.bytes.data() + kHeaderBytes, w.bytes.size() - kHeaderBytes));
  return std::move(w.bytes);
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw ParseError("not a VSPR checkpoint (bad magic)", 0);
  if (bytes.size() < kHeaderBytes + 4) throw ParseError("checkpoint truncated in header", static_cast<std::int64_t>(bytes.size()));
  std::uint32_t version = 0;
  for (int i = 3; i >= 0; --i) version = (version << 8) | bytes[4 + static_cast<std::size_t>(i)];
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);

  const std::size_t body_end = bytes.size() - 4;
  Reader r(bytes, body_end);
  Checkpoint ckpt;
  const auto meta_len = static_cast<std::size_t>(r.le(4, "metadata length"));
  const auto meta_at = r.pos();
  const auto meta = r.text(meta_len, "metadata");
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::parse_error &e) {
    throw ParseError(std::string("checkpoint metadata is not JSON: ") + e.what(), static_cast<std::int64_t>(meta_at));
  }
  const auto count = r.le(4, "tensor count");
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto entry_at = static_cast<std::int64_t>(r.pos());
    const auto name = r.text(static_cast<std::size_t>(r.le(4, "name length")), "tensor name");
    if (name.empty()) throw ParseError("empty tensor name", entry_at);
    const auto tag = r.le(1, "dtype");
    if (tag > 1) throw ParseError("unknown dtype tag " + std::to_string(tag) + " for " + name, static_cast<std::int64_t>(r.pos() - 1));
    const auto dtype = static_cast<DType>(tag);
    const auto rank = r.le(4, "rank");
    if (rank == 0 || rank > 8) throw ParseError("bad rank for " + name, static_cast<std::int64_t>(r.pos() - 4));
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      const auto e = r.le(8, "extent");
      if (e == 0 || e > (1ull << 40)) throw ParseError("bad extent for " + name, static_cast<std::int64_t>(r.pos() - 8));
      shape.push_back(static_cast<std::int64_t>(e));
      numel *= e;
      if (numel > (1ull << 40)) throw ParseError("tensor too large: " + name, static_cast<std::int64_t>(r.pos() - 8));
    }
    const int width = dtype == DType::kF32 ? 4 : 8;
    r.need(static_cast<std::size_t>(numel) * static_cast<std::size_t>(width), "tensor payload");
    std::vector<double> values(static_cast<std::size_t>(numel));
    for (auto &v : values) {
      const auto raw = r.le(width, "value");
      v = dtype == DType::kF32 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)))
                               : std::bit_cast<double>(raw);
    }
    if (ckpt.tensors.count(name)) throw ParseError("duplicate tensor name " + name, entry_at);
    try {
      ckpt.tensors.emplace(name, Tensor::from_values(std::move(shape), std::move(values), dtype));
    } catch (const NumericError &) {
      throw ParseError("non-finite value in tensor " + name, entry_at);
    }
  }
  if (r.pos() != body_end) throw ParseError("trailing bytes before CRC", static_cast<std::int64_t>(r.pos()));
  std::uint32_t stored = 0;
  for (int i = 3; i >= 0; --i) stored = (stored << 8) | bytes[body_end + static_cast<std::size_t>(i)];
  const auto actual = crc_of(bytes.data() + kHeaderBytes, body_end - kHeaderBytes);
  if (stored != actual) throw ParseError("checkpoint CRC mismatch", static_cast<std::int64_t>(body_end));
  return ckpt;
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

Checkpoint encoder_checkpoint(const EncoderState &state, nlohmann::json metadata) {
  check_complete(state);
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  ckpt.metadata["encoder"] = config_to_json(state.config);
  for (const auto &[name, t] : state.params) ckpt.tensors.emplace(name, t);
  return ckpt;
}

EncoderState encoder_from_checkpoint(const Checkpoint &ckpt) {
  if (!ckpt.metadata.contains("encoder")) throw ContractError("checkpoint metadata has no encoder config");
  EncoderState state;
  state.config = config_from_json(ckpt.metadata.at("encoder"));
  bool first = true;
  std::string missing;
  for (const auto &[name, shape] : parameter_shapes(state.config)) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) {
      missing += " " + name;
      continue;
    }
    if (first) state.dtype = it->second.dtype();
    first = false;
    state.params.emplace(name, it->second.clone());
  }
  if (!missing.empty()) throw ContractError("checkpoint is missing tensors:" + missing);
  check_complete(state);
  return state;
}

}  // namespace vesper
