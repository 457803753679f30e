// Copyright 2026 The scan-ocr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint layout (all integers little-endian u32):
//
//   "SCAN" | version | config length | config text (key=value lines)
//   | parameter count | { name length | name | rank | dims... | f32 values }*
//   | CRC-32 of every preceding byte

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "scan/errors.hpp"
#include "scan/model.hpp"

namespace scan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes, std::size_t end)
      : bytes_(bytes), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw ModelError("checkpoint: truncated record");
  }

  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

template <typename V>
std::string join(const std::vector<V>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace detail

inline std::string serialize_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "preset=" << to_string(cfg.preset) << '\n'
     << "scales=" << detail::join(cfg.windows.scales) << '\n'
     << "stride=" << cfg.windows.stride << '\n'
     << "input_channels=" << cfg.extractor.input_channels << '\n'
     << "feature_dim=" << cfg.extractor.feature_dim << '\n'
     << "d_hidden=" << cfg.seq.d_hidden << '\n'
     << "enc_layers=" << cfg.seq.enc_layers << '\n'
     << "dec_layers=" << cfg.seq.dec_layers << '\n'
     << "enc_kernel=" << cfg.seq.enc_kernel << '\n'
     << "dec_kernel=" << cfg.seq.dec_kernel << '\n'
     << "max_source=" << cfg.seq.max_source << '\n'
     << "max_target=" << cfg.seq.max_target << '\n'
     << "charset=" << cfg.charset << '\n';
  return os.str();
}

inline ModelConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ModelError("checkpoint: malformed config line");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ModelError("checkpoint: config lacks '" + key + "'");
    return it->second;
  };
  auto num = [&](const std::string& key) {
    try {
      return static_cast<std::size_t>(std::stoull(get(key)));
    } catch (const std::logic_error&) {
      throw ModelError("checkpoint: bad value for '" + key + "'");
    }
  };
  ModelConfig cfg;
  try {
    cfg.preset = parse_preset(get("preset"));
  } catch (const std::invalid_argument& e) {
    throw ModelError(std::string("checkpoint: ") + e.what());
  }
  cfg.windows.scales.clear();
  std::istringstream scales(get("scales"));
  std::string item;
  while (std::getline(scales, item, ',')) cfg.windows.scales.push_back(std::stoi(item));
  cfg.windows.stride = static_cast<int>(num("stride"));
  cfg.extractor.preset = cfg.preset;
  cfg.extractor.input_channels = num("input_channels");
  cfg.extractor.feature_dim = num("feature_dim");
  cfg.seq = cfg.preset == Preset::paper ? SeqModelConfig::paper() : SeqModelConfig::desk();
  cfg.seq.d_hidden = num("d_hidden");
  cfg.seq.enc_layers = num("enc_layers");
  cfg.seq.dec_layers = num("dec_layers");
  cfg.seq.enc_kernel = num("enc_kernel");
  cfg.seq.dec_kernel = num("dec_kernel");
  cfg.seq.max_source = num("max_source");
  cfg.seq.max_target = num("max_target");
  cfg.charset = get("charset");
  return cfg;
}

template <typename T>
std::string encode_checkpoint(const ScanModel<T>& model) {
  std::string out = "SCAN";
  detail::put_u32(out, kCheckpointVersion);
  const std::string config = serialize_config(model.config());
  detail::put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  const auto& params = model.parameters().params();
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    detail::put_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (T v : p.tensor.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  detail::put_u32(out, detail::crc32_of(out, out.size()));
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ScanModel<T>& model) {
  const std::string bytes = encode_checkpoint(model);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ModelError("cannot write checkpoint " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ModelError("failed writing checkpoint " + path.string());
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ModelError("cannot open checkpoint " + path.string());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// Validates magic, version and checksum; returns a reader positioned after
// the version field.
inline ByteReader open_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "SCAN") != 0) {
    throw ModelError("checkpoint: bad magic");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[body + i])) << (8 * i);
  }
  if (stored != crc32_of(bytes, body)) throw ModelError("checkpoint: checksum mismatch");
  ByteReader reader(bytes, body);
  reader.str(4);
  const std::uint32_t version = reader.u32();
  if (version != kCheckpointVersion) {
    throw ModelError("checkpoint: unsupported version " + std::to_string(version));
  }
  return reader;
}

}  // namespace detail

inline ModelConfig decode_checkpoint_config(const std::string& bytes) {
  auto reader = detail::open_checkpoint(bytes);
  const std::uint32_t len = reader.u32();
  return parse_config(reader.str(len));
}

inline ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  return decode_checkpoint_config(detail::read_file(path));
}

/// Loads parameters into `model`, which must have the stored architecture.
template <typename T>
void decode_checkpoint(const std::string& bytes, ScanModel<T>& model) {
  auto reader = detail::open_checkpoint(bytes);
  const std::uint32_t len = reader.u32();
  const ModelConfig stored = parse_config(reader.str(len));
  if (!stored.same_architecture(model.config())) {
    throw ModelError("checkpoint: configuration mismatch (stored " +
                     serialize_config(stored) + ")");
  }
  auto& params = model.parameters().params();
  if (reader.u32() != params.size()) throw ModelError("checkpoint: parameter count mismatch");
  for (auto& p : params) {
    const std::string name = reader.str(reader.u32());
    if (name != p.name) throw ModelError("checkpoint: expected '" + p.name + "', found '" + name + "'");
    Shape shape(reader.u32());
    for (auto& d : shape) d = reader.u32();
    if (shape != p.tensor.shape()) throw ModelError("checkpoint: shape mismatch for " + name);
    for (T& v : p.tensor.mutable_data()) v = static_cast<T>(std::bit_cast<float>(reader.u32()));
  }
  if (!reader.done()) throw ModelError("checkpoint: trailing bytes");
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, ScanModel<T>& model) {
  decode_checkpoint(detail::read_file(path), model);
}

}  // namespace scan
