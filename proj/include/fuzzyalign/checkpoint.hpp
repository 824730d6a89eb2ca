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
#include <string>
#include <utility>
#include <vector>

#include "fuzzyalign/embedding_file.hpp"
#include "fuzzyalign/error.hpp"
#include "fuzzyalign/matrix.hpp"

namespace fuzzyalign {

// Named-tensor container for trained parameters, little-endian:
//   "FZCK" | tensor count u32
//   per tensor: name length u16 | name | rows u32 | cols u32 | f64 payload
inline constexpr char kCheckpointMagic[4] = {'F', 'Z', 'C', 'K'};

using NamedTensors = std::vector<std::pair<std::string, Matrix>>;

inline std::string encode_checkpoint(const NamedTensors& tensors) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, matrix] : tensors) {
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    detail::put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(matrix.cols()));
    for (std::size_t i = 0; i < matrix.size(); ++i) {
      detail::put_u64(out, std::bit_cast<std::uint64_t>(matrix[i]));
    }
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const NamedTensors& tensors) {
  detail::write_file_atomic(path, encode_checkpoint(tensors));
}

inline NamedTensors load_checkpoint(const std::filesystem::path& path) {
  detail::ByteReader reader(detail::read_file_bytes(path), path.string());
  if (reader.bytes(4) != std::string(kCheckpointMagic, 4)) {
    throw CorruptFileError(path.string() + ": not a checkpoint file");
  }
  const std::uint32_t count = reader.u32();
  NamedTensors tensors;
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = reader.u16();
    std::string name = reader.bytes(name_len);
    const std::uint32_t rows = reader.u32();
    const std::uint32_t cols = reader.u32();
    const std::uint64_t cells = static_cast<std::uint64_t>(rows) * cols;
    reader.need(cells * 8);
    Matrix m(rows, cols);
    for (std::uint64_t i = 0; i < cells; ++i) {
      m[i] = std::bit_cast<double>(reader.u64());
    }
    tensors.emplace_back(std::move(name), std::move(m));
  }
  reader.expect_exhausted();
  return tensors;
}

}  // namespace fuzzyalign
