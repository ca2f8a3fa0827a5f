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

#include "pcgc/range_coder.hpp"

#include <algorithm>

namespace pcgc {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
constexpr std::uint32_t kBot = 1u << 16;  // >= kCdfTotal
}  // namespace

void RangeEncoder::renorm() {
  // Emit the top byte while it is settled; when the range gets too small
  // without agreement, clamp it to the carry-free remainder (this is what
  // makes the coder carry-less).
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = -low_ & (kBot - 1)), true))) {
    out_.push_back(std::uint8_t(low_ >> 24));
    low_ <<= 8;
    range_ <<= 8;
  }
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq) {
  const std::uint32_t unit = range_ >> 16;  // total is always 2^16
  low_ += cum * unit;
  range_ = freq * unit;
  renorm();
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 4; ++i) {
    out_.push_back(std::uint8_t(low_ >> 24));
    low_ <<= 8;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= in_.size()) throw ParseError("range decoder: truncated stream");
  return in_[pos_++];
}

void RangeDecoder::renorm() {
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = -low_ & (kBot - 1)), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

std::uint32_t RangeDecoder::decode_freq() {
  unit_ = range_ >> 16;
  const std::uint32_t f = (code_ - low_) / unit_;
  if (f >= kCdfTotal) throw ParseError("range decoder: corrupt stream");
  return f;
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq) {
  low_ += cum * unit_;
  range_ = freq * unit_;
  renorm();
}

// The boundary bins of every table are escape bins: a symbol s <= lo is
// coded as bin lo, a symbol s >= hi as bin hi, and in both cases the exact
// value is appended to `escapes`. Symbols strictly inside (lo, hi) cost no
// side data. Codec tables are built over [min-1, max+1] so real symbols
// never touch the boundary.
CodedStream encode_symbols(std::span<const std::int32_t> symbols,
                           std::span<const CdfTable* const> tables) {
  if (symbols.size() != tables.size())
    throw ConfigError("encode_symbols: one table per symbol required");
  CodedStream stream;
  stream.symbol_count = std::uint32_t(symbols.size());
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const CdfTable& t = *tables[i];
    std::int32_t s = symbols[i];
    if (s <= t.lo) {
      s = t.lo;
      stream.escapes.push_back(symbols[i]);
    } else if (s >= t.hi) {
      s = t.hi;
      stream.escapes.push_back(symbols[i]);
    }
    const std::size_t bin = std::size_t(s - t.lo);
    enc.encode(t.cum[bin], t.cum[bin + 1] - t.cum[bin]);
  }
  stream.bytes = enc.finish();
  return stream;
}

std::vector<std::int32_t> decode_symbols(
    const CodedStream& stream, std::span<const CdfTable* const> tables) {
  if (std::size_t(stream.symbol_count) != tables.size())
    throw ConfigError("decode_symbols: one table per symbol required");
  std::vector<std::int32_t> out;
  out.reserve(stream.symbol_count);
  RangeDecoder dec(stream.bytes);
  std::size_t esc = 0;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const CdfTable& t = *tables[i];
    const std::uint32_t f = dec.decode_freq();
    // Find the bin with cum[bin] <= f < cum[bin+1].
    const auto it = std::upper_bound(t.cum.begin(), t.cum.end(), f);
    const std::size_t bin = std::size_t(it - t.cum.begin()) - 1;
    dec.consume(t.cum[bin], t.cum[bin + 1] - t.cum[bin]);
    std::int32_t s = t.lo + std::int32_t(bin);
    if (s == t.lo || s == t.hi) {
      if (esc >= stream.escapes.size())
        throw ParseError("decode_symbols: missing escape payload");
      s = stream.escapes[esc++];
    }
    out.push_back(s);
  }
  if (esc != stream.escapes.size())
    throw ParseError("decode_symbols: unused escape payload");
  return out;
}

}  // namespace pcgc
