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

#include "pcgc/entropy.hpp"
#include "test_util.hpp"

using namespace pcgc;
using namespace pcgc::testing;

TEST_CASE("quantize_round uses half-away ties") {
  Grid4<double> g(1, 1, 1, 3);
  g.v[0] = 0.4;
  g.v[1] = -1.5;
  g.v[2] = 2.0;
  const Grid4<double> q = quantize_round(g);
  CHECK(q.v[0] == 0.0);
  CHECK(q.v[1] == -2.0);
  CHECK(q.v[2] == 2.0);
}

TEST_CASE("quantize_noise stays within half a unit and reproduces") {
  Grid4<double> g(1, 10, 10, 10);
  Rng fill(1);
  fill_uniform(g, fill, -4, 4);

  Rng rng_a(42), rng_b(42);
  const Grid4<double> na = quantize_noise(g, rng_a);
  const Grid4<double> nb = quantize_noise(g, rng_b);
  CHECK((na.v == nb.v).all());
  CHECK(((na.v - g.v).abs() <= 0.5).all());

  // Monte-Carlo mean of the noise: 0 within 3*sigma/sqrt(n).
  Rng rng(7);
  const int n = 100000;
  double sum = 0;
  Grid4<double> one(1, 1, 1, 1);
  for (int i = 0; i < n; ++i) sum += quantize_noise(one, rng).v[0];
  const double bound = 3.0 * (1.0 / std::sqrt(12.0)) / std::sqrt(double(n));
  CHECK(std::abs(sum / n) < bound);
}

TEST_CASE("laplace bin mass closed forms") {
  CHECK(laplace_bin_mass(0, 0, 1) ==
        doctest::Approx(1.0 - std::exp(-0.5)).epsilon(1e-9));
  CHECK(laplace_bin_mass(0, 0, 1) == doctest::Approx(0.393469).epsilon(1e-5));
  CHECK(laplace_bin_mass(1, 0, 1) ==
        doctest::Approx((std::exp(-0.5) - std::exp(-1.5)) / 2).epsilon(1e-9));
  CHECK(laplace_bin_mass(1, 0, 1) == doctest::Approx(0.191700).epsilon(1e-4));
  for (int n : {1, 2, 7}) {
    CHECK(laplace_bin_mass(-n, 0, 0.7) ==
          doctest::Approx(laplace_bin_mass(n, 0, 0.7)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(laplace_bin_mass(0, 0, 0), ConfigError);
  CHECK_THROWS_AS(laplace_bin_mass(0, 0, -1), ConfigError);
}

TEST_CASE("laplace log mass gradients match finite differences") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double mu = rng.uniform(-4, 4);
    const double b = rng.uniform(0.05, 8);
    double t = rng.uniform(-8, 8);
    // keep clear of the piecewise boundaries where the CDF kinks
    if (std::abs(t - 0.5 - mu) < 0.02 || std::abs(t + 0.5 - mu) < 0.02)
      continue;
    const auto g = laplace_bin_log2_mass_grad(t, mu, b);
    const double h = 1e-5;
    const double d_t = (laplace_bin_log2_mass(t + h, mu, b) -
                        laplace_bin_log2_mass(t - h, mu, b)) /
                       (2 * h);
    const double d_mu = (laplace_bin_log2_mass(t, mu + h, b) -
                         laplace_bin_log2_mass(t, mu - h, b)) /
                        (2 * h);
    const double d_b = (laplace_bin_log2_mass(t, mu, b + h) -
                        laplace_bin_log2_mass(t, mu, b - h)) /
                       (2 * h);
    CHECK(rel_err(g.d_t, d_t) < 1e-4);
    CHECK(rel_err(g.d_mu, d_mu) < 1e-4);
    CHECK(rel_err(g.d_b, d_b) < 1e-4);
    CHECK(g.log2_mass == doctest::Approx(laplace_bin_log2_mass(t, mu, b)));
  }
}

TEST_CASE("factorized bin mass delegates to the Laplace with psi") {
  FactorizedParams<double> psi;
  psi.m = ArrayX<double>::Zero(2);
  psi.raw_b = ArrayX<double>::Zero(2);
  psi.m[1] = 1.5;
  psi.raw_b[1] = std::log(0.5);
  CHECK(factorized_bin_mass(0, 0, psi) ==
        doctest::Approx(laplace_bin_mass(0, 0, 1)).epsilon(1e-12));
  CHECK(factorized_bin_mass(2, 1, psi) ==
        doctest::Approx(laplace_bin_mass(2, 1.5, 0.5)).epsilon(1e-12));

  double total = 0;
  for (int n = -64; n <= 64; ++n) {
    const double m = factorized_bin_mass(n, 0, psi);
    CHECK(m > 0);
    total += m;
  }
  CHECK(total >= 1.0 - std::exp(-63.5));
}

TEST_CASE("rate_bits") {
  const double half = 0.5;
  CHECK(rate_bits(std::span<const double>(&half, 1)) == doctest::Approx(1.0));
  const double m0 = laplace_bin_mass(0, 0, 1);
  CHECK(rate_bits(std::span<const double>(&m0, 1)) ==
        doctest::Approx(1.3459).epsilon(1e-3));
  CHECK(rate_bits({}) == 0.0);
}

TEST_CASE("bin mass sums telescope over [-64, 64]") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const double mu = rng.uniform(-8, 8);
    const double sigma = rng.uniform(kSigmaMin, 8.0);
    double total = 0;
    for (int n = -64; n <= 64; ++n) total += laplace_bin_mass(n, mu, sigma);
    CHECK(total >= 0.999);
    CHECK(total <= 1.0 + 1e-9);
  }
}

TEST_CASE("integer rate is minimized at round(mu)") {
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    const double mu = rng.uniform(-8, 8);
    const double sigma = rng.uniform(0.05, 8.0);
    const auto best = std::int32_t(round_half_away(mu));
    const double best_mass = laplace_bin_mass(best, mu, sigma);
    for (int n = -16; n <= 16; ++n)
      CHECK(laplace_bin_mass(n, mu, sigma) <= best_mass + 1e-12);
  }
}

TEST_CASE("cdf table from uniform masses") {
  const std::vector<double> masses(4, 0.25);
  const CdfTable t = build_cdf_table_from_masses(masses, 0);
  REQUIRE(t.cum.size() == 5);
  for (int i = 0; i < 4; ++i) CHECK(t.count(i) == 16384);
  CHECK(t.cum.back() == kCdfTotal);
}

TEST_CASE("cdf tables are monotone, total 65536, floor one count") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const double mu = quantize_mu(rng.uniform(-10, 10));
    const double sigma = sigma_from_index(int(rng.uniform_int(0, 255)));
    const std::int32_t lo = std::int32_t(rng.uniform_int(-40, -1));
    const std::int32_t hi = std::int32_t(rng.uniform_int(0, 40));
    const CdfTable t = build_cdf_table(mu, sigma, lo, hi);
    CHECK(t.cum.front() == 0);
    CHECK(t.cum.back() == kCdfTotal);
    for (std::size_t i = 1; i < t.cum.size(); ++i)
      CHECK(t.cum[i] > t.cum[i - 1]);  // every bin holds >= 1 count
  }
  // A far-off bin keeps a nonzero count even with negligible mass.
  const CdfTable t = build_cdf_table(0.0, 0.01, -30, 30);
  CHECK(t.count(-30) >= 1);
  CHECK(t.count(30) >= 1);
  CHECK(t.count(0) > 60000);
}

TEST_CASE("cdf construction is a pure function") {
  const CdfTable a = build_cdf_table(quantize_mu(1.37), sigma_from_index(80),
                                     -12, 9);
  const CdfTable b = build_cdf_table(quantize_mu(1.37), sigma_from_index(80),
                                     -12, 9);
  CHECK(a.cum == b.cum);
  CHECK_THROWS_AS(build_cdf_table(0, 1, 3, 2), ConfigError);
}

TEST_CASE("mu and sigma quantizers are stable grids") {
  CHECK(quantize_mu(0.0) == 0.0);
  CHECK(quantize_mu(1.0 / 512.0) * 256.0 == 1.0);  // rounds half away
  CHECK(sigma_from_index(0) == doctest::Approx(kSigmaMin).epsilon(1e-12));
  CHECK(sigma_from_index(255) == doctest::Approx(kSigmaMax).epsilon(1e-12));
  for (int i : {0, 17, 128, 255})
    CHECK(sigma_index(sigma_from_index(i)) == i);
}
