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

#include "pcgc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pcgc {

double laplace_bin_mass(double n, double mu, double sigma) {
  if (!(sigma > 0)) throw ConfigError("laplace_bin_mass: sigma must be > 0");
  return std::exp2(laplace_bin_log2_mass(n, mu, sigma));
}

double factorized_bin_mass(std::int32_t n, int channel,
                           const FactorizedParams<double>& psi) {
  if (channel < 0 || channel >= psi.m.size())
    throw ConfigError("factorized_bin_mass: channel out of range");
  return laplace_bin_mass(double(n), psi.m[channel],
                          clamped_exp_scale(psi.raw_b[channel]));
}

double rate_bits(std::span<const double> masses) {
  double bits = 0.0;
  for (double m : masses) bits -= std::log2(m);
  return bits;
}

double quantize_mu(double mu) {
  return double(std::llround(mu * 256.0)) / 256.0;
}

int sigma_index(double sigma) {
  const double lo = std::log(kSigmaMin), hi = std::log(kSigmaMax);
  const double t = (std::log(sigma) - lo) / (hi - lo);
  return int(std::clamp<long long>(std::llround(t * 255.0), 0, 255));
}

double sigma_from_index(int index) {
  const double lo = std::log(kSigmaMin), hi = std::log(kSigmaMax);
  return std::exp(lo + double(index) * (hi - lo) / 255.0);
}

CdfTable build_cdf_table_from_masses(std::span<const double> masses,
                                     std::int32_t lo) {
  const std::size_t n = masses.size();
  if (n == 0) throw ConfigError("cdf table: empty symbol range");
  if (n > 32768) throw ConfigError("cdf table: symbol range too wide");

  const double scale = double(kCdfTotal - n);
  std::vector<std::int64_t> counts(n);
  std::vector<double> remainder(n);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = masses[i] * scale;
    counts[i] = std::max<std::int64_t>(1, std::llround(q));
    remainder[i] = q - double(counts[i]);
    total += counts[i];
  }

  std::int64_t diff = std::int64_t(kCdfTotal) - total;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (diff > 0) {
    // Give everybody an equal share first, then one extra to the bins with
    // the largest remainders (ties to the lower index).
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
      return a < b;
    });
    const std::int64_t share = diff / std::int64_t(n);
    const std::int64_t extra = diff % std::int64_t(n);
    for (std::size_t i = 0; i < n; ++i)
      counts[order[i]] += share + (std::int64_t(i) < extra ? 1 : 0);
  } else if (diff < 0) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (remainder[a] != remainder[b]) return remainder[a] < remainder[b];
      return a < b;
    });
    while (diff < 0) {
      bool changed = false;
      for (std::size_t i = 0; i < n && diff < 0; ++i) {
        if (counts[order[i]] > 1) {
          --counts[order[i]];
          ++diff;
          changed = true;
        }
      }
      if (!changed)
        throw ConfigError("cdf table: cannot renormalize counts");
    }
  }

  CdfTable table;
  table.lo = lo;
  table.hi = lo + std::int32_t(n) - 1;
  table.cum.resize(n + 1);
  table.cum[0] = 0;
  for (std::size_t i = 0; i < n; ++i)
    table.cum[i + 1] = table.cum[i] + std::uint32_t(counts[i]);
  return table;
}

CdfTable build_cdf_table(double mu_q, double sigma_q, std::int32_t lo,
                         std::int32_t hi) {
  if (lo > hi) throw ConfigError("cdf table: empty symbol range");
  const std::size_t n = std::size_t(hi - lo + 1);
  std::vector<double> masses(n);
  if (n == 1) {
    masses[0] = 1.0;
  } else {
    auto cdf = [&](double u) {
      return u < mu_q ? 0.5 * std::exp((u - mu_q) / sigma_q)
                      : 1.0 - 0.5 * std::exp(-(u - mu_q) / sigma_q);
    };
    // Boundary bins take the full tails; with it the masses telescope to 1.
    masses[0] = cdf(double(lo) + 0.5);
    for (std::int32_t s = lo + 1; s < hi; ++s)
      masses[std::size_t(s - lo)] = laplace_bin_mass(double(s), mu_q, sigma_q);
    masses[n - 1] = 1.0 - cdf(double(hi) - 0.5);
  }
  return build_cdf_table_from_masses(masses, lo);
}

double table_bits(const CdfTable& table, std::int32_t symbol) {
  return -std::log2(double(table.count(symbol)) / double(kCdfTotal));
}

}  // namespace pcgc
