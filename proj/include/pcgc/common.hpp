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

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace pcgc {

// Base class for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed external input: PLY text, bitstreams, checkpoints.
struct ParseError : Error {
  using Error::Error;
};

// Contract violations: bad shapes, invalid configuration, out-of-range data.
struct ConfigError : Error {
  using Error::Error;
};

// Rounding rule used everywhere coordinates or features are quantized:
// round half away from zero.
inline std::int64_t round_half_away(double x) { return std::llround(x); }
inline std::int64_t round_half_away(float x) { return std::llroundf(x); }

// Exact integer evaluation of round(a*num/den) with half-away-from-zero
// ties, so encoder and decoder agree independent of floating point.
inline std::int64_t mul_div_round(std::int64_t a, std::int64_t num,
                                  std::int64_t den) {
  const std::int64_t p = a * num;
  if (p >= 0) return (2 * p + den) / (2 * den);
  return -((-2 * p + den) / (2 * den));
}

// Positive rational scale factor, stored exactly so both codec ends round
// identically.
struct Rational {
  std::uint32_t num = 1;
  std::uint32_t den = 1;

  Rational() = default;
  Rational(std::uint32_t n, std::uint32_t d) : num(n), den(d) {
    if (num == 0 || den == 0) throw ConfigError("scale factor must be > 0");
    const std::uint32_t g = std::gcd(num, den);
    num /= g;
    den /= g;
  }

  bool is_one() const { return num == den; }
  double value() const { return double(num) / double(den); }
  Rational inverse() const { return Rational(den, num); }

  friend bool operator==(const Rational&, const Rational&) = default;
};

// Deterministic RNG. The engine is std::mt19937_64 (portable by standard);
// the mapping to doubles is done by hand because std::uniform_real_distribution
// is not guaranteed to produce identical streams across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1), 53 random bits.
  double uniform() {
    return double(eng_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + std::int64_t(eng_() % span);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace pcgc
