// Copyright 2026 The PCGC Authors.
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

#include <cstdint>
#include <span>
#include <vector>

#include "pcgc/entropy.hpp"

namespace pcgc {

// Carry-less 32-bit range coder with Schindler-style renormalization and
// 16-bit probability precision (totals are always 2^16). The byte format is
// frozen by golden tests; both ends must walk identical CdfTable sequences.
class RangeEncoder {
 public:
  void encode(std::uint32_t cum, std::uint32_t freq);
  std::vector<std::uint8_t> finish();

 private:
  void renorm();

  std::uint32_t low_ = 0;
  std::uint32_t range_ = 0xffffffffu;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  // Returns the cumulative-frequency slot of the next symbol; the caller
  // resolves it against its table and then calls consume().
  std::uint32_t decode_freq();
  void consume(std::uint32_t cum, std::uint32_t freq);

 private:
  std::uint8_t next_byte();
  void renorm();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t low_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xffffffffu;
  std::uint32_t unit_ = 0;
};

// Entropy-coded symbol sequence. Symbols outside a table's range are coded
// through the table's boundary escape bin with the raw value appended to
// `escapes` in order of occurrence.
struct CodedStream {
  std::vector<std::uint8_t> bytes;
  std::uint32_t symbol_count = 0;
  std::vector<std::int32_t> escapes;
};

CodedStream encode_symbols(std::span<const std::int32_t> symbols,
                           std::span<const CdfTable* const> tables);

std::vector<std::int32_t> decode_symbols(const CodedStream& stream,
                                         std::span<const CdfTable* const> tables);

}  // namespace pcgc
