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

#include <doctest.h>

#include "pcgc/range_coder.hpp"

using namespace pcgc;

namespace {

CdfTable uniform_table(int bins, std::int32_t lo) {
  return build_cdf_table_from_masses(std::vector<double>(bins, 1.0 / bins),
                                     lo);
}

std::vector<const CdfTable*> repeat(const CdfTable& t, std::size_t n) {
  return std::vector<const CdfTable*>(n, &t);
}

}  // namespace

TEST_CASE("empty sequence is a flush-only stream") {
  const CodedStream s = encode_symbols({}, {});
  CHECK(s.bytes.size() == 4);
  CHECK(decode_symbols(s, {}).empty());
}

TEST_CASE("uniform 256-symbol alphabet costs one byte per symbol") {
  const CdfTable t = uniform_table(256, 0);
  Rng rng(1);
  std::vector<std::int32_t> symbols(1000);
  for (auto& s : symbols)
    s = std::int32_t(rng.uniform_int(1, 254));  // interior, no escapes
  const auto tables = repeat(t, symbols.size());
  const CodedStream coded = encode_symbols(symbols, tables);
  CHECK(coded.escapes.empty());
  CHECK(coded.bytes.size() >= 992);
  CHECK(coded.bytes.size() <= 1008);
  CHECK(decode_symbols(coded, tables) == symbols);
}

TEST_CASE("roundtrip with random tables, skewed masses and escapes") {
  Rng rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = int(rng.uniform_int(1, 400));
    std::vector<CdfTable> tables;
    tables.reserve(std::size_t(n));
    std::vector<const CdfTable*> ptrs;
    std::vector<std::int32_t> symbols;
    for (int i = 0; i < n; ++i) {
      const int bins = int(rng.uniform_int(2, 40));
      const std::int32_t lo = std::int32_t(rng.uniform_int(-50, 50));
      std::vector<double> masses(static_cast<std::size_t>(bins));
      double total = 0;
      for (auto& m : masses) {
        m = std::pow(rng.uniform(), 6.0) + 1e-12;  // include near-zero bins
        total += m;
      }
      for (auto& m : masses) m /= total;
      tables.push_back(build_cdf_table_from_masses(masses, lo));
      // Mostly interior symbols, sometimes far outside the range.
      if (rng.uniform() < 0.07)
        symbols.push_back(std::int32_t(rng.uniform_int(-100000, 100000)));
      else
        symbols.push_back(
            std::int32_t(rng.uniform_int(lo + 1, lo + bins - 2 >= lo + 1
                                                     ? lo + bins - 2
                                                     : lo + 1)));
    }
    for (const auto& t : tables) ptrs.push_back(&t);
    const CodedStream coded = encode_symbols(symbols, ptrs);
    CHECK(decode_symbols(coded, ptrs) == symbols);

    // Size bound: ideal table bits plus bounded coder overhead.
    double ideal_bits = 0;
    for (int i = 0; i < n; ++i) {
      const CdfTable& t = tables[std::size_t(i)];
      ideal_bits += table_bits(t, std::clamp(symbols[std::size_t(i)], t.lo, t.hi));
    }
    CHECK(double(coded.bytes.size()) <= ideal_bits / 8.0 + 16.0);
  }
}

TEST_CASE("encoding is deterministic") {
  const CdfTable t = uniform_table(16, -8);
  std::vector<std::int32_t> symbols{0, -3, 5, 5, 5, -7, 2, 0, 1};
  const auto tables = repeat(t, symbols.size());
  const CodedStream a = encode_symbols(symbols, tables);
  const CodedStream b = encode_symbols(symbols, tables);
  CHECK(a.bytes == b.bytes);
}

TEST_CASE("frozen byte layout") {
  // The coded format is a compatibility surface; these exact bytes pin it.
  const CdfTable t = uniform_table(4, 0);
  const std::vector<std::int32_t> symbols{1, 2, 1, 1, 2};
  const CodedStream coded = encode_symbols(symbols, repeat(t, 5));
  CHECK(coded.bytes ==
        std::vector<std::uint8_t>{0x65, 0x7E, 0x40, 0x00, 0x00});
}

TEST_CASE("truncated stream throws") {
  const CdfTable t = uniform_table(256, 0);
  Rng rng(3);
  std::vector<std::int32_t> symbols(50);
  for (auto& s : symbols) s = std::int32_t(rng.uniform_int(1, 254));
  const auto tables = repeat(t, symbols.size());
  CodedStream coded = encode_symbols(symbols, tables);
  coded.bytes.resize(coded.bytes.size() - 8);
  CHECK_THROWS_AS(decode_symbols(coded, tables), ParseError);
}

TEST_CASE("escape path carries exact raw values") {
  const CdfTable t = uniform_table(8, 0);  // escapes at 0 and 7
  const std::vector<std::int32_t> symbols{3, -1000000, 4, 2000000000, 0};
  const auto tables = repeat(t, symbols.size());
  const CodedStream coded = encode_symbols(symbols, tables);
  CHECK(coded.escapes.size() == 3);  // two outliers plus the literal 0
  CHECK(decode_symbols(coded, tables) == symbols);
}
