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

#include "pcgc/grid.hpp"
#include "pcgc/transforms.hpp"

namespace pcgc {

// ---- quantization ------------------------------------------------------

// Elementwise round half away from zero (values stay in the grid type).
template <typename S>
Grid4<S> quantize_round(const Grid4<S>& x) {
  Grid4<S> out = x;
  for (Eigen::Index i = 0; i < out.v.size(); ++i)
    out.v[i] = S(round_half_away(double(x.v[i])));
  return out;
}

// Training proxy: adds i.i.d. uniform noise in [-1/2, 1/2); the gradient
// passes through unchanged.
template <typename S>
Grid4<S> quantize_noise(const Grid4<S>& x, Rng& rng) {
  Grid4<S> out = x;
  for (Eigen::Index i = 0; i < out.v.size(); ++i)
    out.v[i] = x.v[i] + S(rng.uniform() - 0.5);
  return out;
}

template <typename S>
std::vector<std::int32_t> to_symbols(const Grid4<S>& rounded) {
  std::vector<std::int32_t> out(std::size_t(rounded.v.size()));
  for (Eigen::Index i = 0; i < rounded.v.size(); ++i)
    out[std::size_t(i)] = std::int32_t(std::lround(double(rounded.v[i])));
  return out;
}

// ---- Laplace bin masses ------------------------------------------------

// log2 of F(t+1/2) - F(t-1/2) for the Laplace CDF F with location mu and
// scale b, evaluated in log space so far-tail bins do not underflow.
template <typename S>
S laplace_bin_log2_mass(S t, S mu, S b);

// Same value plus partial derivatives of the log2 mass.
template <typename S>
struct LaplaceBinGrad {
  S log2_mass;
  S d_t, d_mu, d_b;
};

template <typename S>
LaplaceBinGrad<S> laplace_bin_log2_mass_grad(S t, S mu, S b);

// Probability mass of the integer bin n under Laplace(mu, sigma).
double laplace_bin_mass(double n, double mu, double sigma);

// Per-channel factorized variant using psi = (m_c, raw_b_c).
double factorized_bin_mass(std::int32_t n, int channel,
                           const FactorizedParams<double>& psi);

template <typename S>
S clamped_exp_scale(S raw) {
  const S lo = S(std::log(kSigmaMin)), hi = S(std::log(kSigmaMax));
  return std::exp(std::min(hi, std::max(lo, raw)));
}

// Sum of -log2(mass_i) over a symbol sequence.
double rate_bits(std::span<const double> masses);

// ---- shared (mu, sigma) quantization grid ------------------------------

// Locations snap to a 1/256 grid; scales snap to a 256-entry geometric grid
// over [kSigmaMin, kSigmaMax]. Both codec ends quantize before building
// tables so the tables agree bit-exactly.
double quantize_mu(double mu);
int sigma_index(double sigma);
double sigma_from_index(int index);

// ---- integer CDF tables -------------------------------------------------

// Cumulative counts over the integer symbol range [lo, hi]; cum has
// hi-lo+2 entries, cum.front() == 0 and cum.back() == 65536, every bin
// holds at least one count.
struct CdfTable {
  std::int32_t lo = 0;
  std::int32_t hi = 0;
  std::vector<std::uint32_t> cum;

  int bins() const { return int(hi - lo + 1); }
  std::uint32_t count(std::int32_t symbol) const {
    return cum[std::size_t(symbol - lo + 1)] - cum[std::size_t(symbol - lo)];
  }
};

inline constexpr std::uint32_t kCdfTotal = 1u << 16;

// Deterministic count allocation from real-valued masses: per-bin count
// max(1, round(mass * (65536 - nbins))), then largest-remainder
// renormalization to a total of exactly 65536.
CdfTable build_cdf_table_from_masses(std::span<const double> masses,
                                     std::int32_t lo);

// Laplace table over [lo, hi] for quantized (mu, sigma). The two boundary
// bins absorb the distribution tails, which makes them usable as escape
// bins by the symbol coder.
CdfTable build_cdf_table(double mu_q, double sigma_q, std::int32_t lo,
                         std::int32_t hi);

// Per-symbol ideal code length of the quantized table, in bits.
double table_bits(const CdfTable& table, std::int32_t symbol);

// ---- template implementations -------------------------------------------

template <typename S>
S laplace_bin_log2_mass(S t, S mu, S b) {
  const S u1 = t - S(0.5), u2 = t + S(0.5);
  const S ln2 = S(M_LN2);
  if (u2 <= mu) {
    // Whole bin in the left tail; linear in log space, never underflows.
    return (std::log(S(0.5)) + (u2 - mu) / b + std::log(-std::expm1(-1 / b))) /
           ln2;
  }
  if (u1 >= mu) {
    return (std::log(S(0.5)) + (mu - u1) / b + std::log(-std::expm1(-1 / b))) /
           ln2;
  }
  const S e1 = std::exp((u1 - mu) / b);
  const S e2 = std::exp((mu - u2) / b);
  return std::log1p(-S(0.5) * (e1 + e2)) / ln2;
}

template <typename S>
LaplaceBinGrad<S> laplace_bin_log2_mass_grad(S t, S mu, S b) {
  const S u1 = t - S(0.5), u2 = t + S(0.5);
  const S ln2 = S(M_LN2);
  LaplaceBinGrad<S> out;
  if (u2 <= mu || u1 >= mu) {
    const S q = -std::expm1(-1 / b);  // 1 - e^{-1/b}
    const S dq_term = std::exp(-1 / b) / (q * b * b);
    const S dist = (u2 <= mu) ? (u2 - mu) : (u1 - mu);  // signed
    out.log2_mass =
        (std::log(S(0.5)) - std::abs(dist) / b + std::log(q)) / ln2;
    const S sign = (u2 <= mu) ? S(1) : S(-1);
    out.d_t = sign / (b * ln2);
    out.d_mu = -sign / (b * ln2);
    out.d_b = (std::abs(dist) / (b * b) - dq_term) / ln2;
    return out;
  }
  const S a1 = (u1 - mu) / b;
  const S a2 = (mu - u2) / b;
  const S e1 = std::exp(a1), e2 = std::exp(a2);
  const S m = -std::expm1(std::log(S(0.5) * (e1 + e2)));  // 1 - (e1+e2)/2
  out.log2_mass = std::log(m) / ln2;
  out.d_mu = S(0.5) / b * (e1 - e2) / (m * ln2);
  out.d_t = S(0.5) / b * (e2 - e1) / (m * ln2);
  out.d_b = S(0.5) / b * (a1 * e1 + a2 * e2) / (m * ln2);
  return out;
}

}  // namespace pcgc
