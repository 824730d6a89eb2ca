// Copyright 2026 the fuzzyalign authors
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

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"

namespace fuzzyalign {

// Embedding container, little-endian throughout:
//   "EMBF" | version u32 | rows u32 | dim u32 | ids-present u8
//   [rows x u32 identity ids]   when the flag is 1
//   rows x dim x f32 payload, row-major
inline constexpr char kEmbeddingMagic[4] = {'E', 'M', 'B', 'F'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string name)
      : data_(std::move(data)), name_(std::move(name)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  std::uint16_t u16() {
    need(2);
    const auto b0 = static_cast<std::uint8_t>(data_[pos_]);
    const auto b1 = static_cast<std::uint8_t>(data_[pos_ + 1]);
    pos_ += 2;
    return static_cast<std::uint16_t>(b0 | (b1 << 8));
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<std::uint8_t>(data_[pos_ + i]);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void expect_exhausted() {
    if (pos_ != data_.size()) {
      throw CorruptFileError(name_ + ": trailing bytes after payload");
    }
  }

  void need(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw CorruptFileError(name_ + ": truncated, needed " +
                             std::to_string(n) + " more bytes at offset " +
                             std::to_string(pos_));
    }
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string data_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CorruptFileError("cannot open " + path.string());
  }
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

/// Writes the whole buffer to a temporary file in the same directory, then
/// renames over the target.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& data) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot open " + tmp.string() + " for writing");
    }
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) {
      throw Error("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

struct EmbeddingData {
  Matrix features;  // values widened from the stored 32-bit floats
  std::vector<std::uint32_t> ids;  // empty when the file carries none
};

inline std::string encode_embedding(const Matrix& features,
                                    const std::vector<std::uint32_t>* ids) {
  if (ids != nullptr && ids->size() != features.rows()) {
    throw ShapeError("embedding ids count does not match rows");
  }
  std::string out;
  out.reserve(17 + features.size() * 4 + (ids ? ids->size() * 4 : 0));
  out.append(kEmbeddingMagic, 4);
  detail::put_u32(out, kEmbeddingVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(features.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(features.cols()));
  out.push_back(ids != nullptr ? 1 : 0);
  if (ids != nullptr) {
    for (std::uint32_t id : *ids) detail::put_u32(out, id);
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    detail::put_u32(out, std::bit_cast<std::uint32_t>(
                             static_cast<float>(features[i])));
  }
  return out;
}

inline void write_embedding_file(const std::filesystem::path& path,
                                 const Matrix& features,
                                 const std::vector<std::uint32_t>* ids) {
  detail::write_file_atomic(path, encode_embedding(features, ids));
}

inline EmbeddingData decode_embedding(std::string bytes, std::string name) {
  detail::ByteReader reader(std::move(bytes), std::move(name));
  const std::string magic = reader.bytes(4);
  if (magic != std::string(kEmbeddingMagic, 4)) {
    throw CorruptFileError("bad magic, not an embedding file");
  }
  const std::uint32_t version = reader.u32();
  if (version != kEmbeddingVersion) {
    throw CorruptFileError("unsupported embedding format version " +
                           std::to_string(version));
  }
  const std::uint32_t rows = reader.u32();
  const std::uint32_t dim = reader.u32();
  const std::uint8_t ids_present = reader.u8();
  if (ids_present > 1) {
    throw CorruptFileError("identity flag must be 0 or 1");
  }
  const std::uint64_t expected =
      static_cast<std::uint64_t>(rows) * dim * 4 +
      (ids_present == 1 ? static_cast<std::uint64_t>(rows) * 4 : 0);
  if (expected != reader.remaining()) {
    throw CorruptFileError("payload length mismatch: header promises " +
                           std::to_string(expected) + " bytes, file holds " +
                           std::to_string(reader.remaining()));
  }
  EmbeddingData data;
  if (ids_present == 1) {
    data.ids.reserve(rows);
    for (std::uint32_t i = 0; i < rows; ++i) data.ids.push_back(reader.u32());
  }
  data.features = Matrix(rows, dim);
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    data.features[i] = static_cast<double>(
        std::bit_cast<float>(reader.u32()));
  }
  reader.expect_exhausted();
  return data;
}

inline EmbeddingData read_embedding_file(const std::filesystem::path& path) {
  return decode_embedding(detail::read_file_bytes(path), path.string());
}

}  // namespace fuzzyalign
