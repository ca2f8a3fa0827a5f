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

#include "pcgc/checkpoint.hpp"
#include "pcgc/trainer.hpp"
#include "test_util.hpp"

using namespace pcgc;
using namespace pcgc::testing;

namespace {

NetConfig micro_config() {
  NetConfig cfg;
  cfg.stages = 3;
  cfg.vrn_per_stage = 1;
  cfg.base_channels = {2, 4, 4};
  cfg.latent_channels = 2;
  cfg.hyper_channels = 2;
  return cfg;
}

Grid4<double> grid_of(std::initializer_list<double> values) {
  Grid4<double> g(1, 1, 1, int(values.size()));
  Eigen::Index i = 0;
  for (double v : values) g.v[i++] = v;
  return g;
}

}  // namespace

TEST_CASE("wbce closed forms") {
  // Uniform logits at 0 with 4 occupied / 4 null voxels and alpha = 3.
  const Grid4<double> logits = grid_of({0, 0, 0, 0, 0, 0, 0, 0});
  const std::vector<std::uint8_t> occ{1, 1, 1, 1, 0, 0, 0, 0};
  CHECK(wbce(logits, occ, 3.0) == doctest::Approx(2.772589).epsilon(1e-7));

  // Near-perfect logits drive the distortion to zero.
  const Grid4<double> sharp = grid_of({40, 40, -40, -40});
  const std::vector<std::uint8_t> occ2{1, 1, 0, 0};
  CHECK(wbce(sharp, occ2, 3.0) < 1e-6);

  // One occupied voxel at p = 1/e, no nulls: D = 1 exactly.
  const double logit = -std::log(std::exp(1.0) - 1.0);  // sigmoid = 1/e
  const Grid4<double> one = grid_of({logit});
  const std::vector<std::uint8_t> occ3{1};
  CHECK(wbce(one, occ3, 3.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("wbce alpha weighting") {
  Rng rng(1);
  Grid4<double> logits(1, 4, 4, 4);
  fill_uniform(logits, rng, -2, 2);
  std::vector<std::uint8_t> occ(64, 0);
  for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = rng.uniform() < 0.4;
  occ[0] = 1;

  // At alpha = 1 the loss is the sum of the two class means (Eq. form).
  double occ_mean = 0, null_mean = 0;
  int n_occ = 0, n_null = 0;
  for (Eigen::Index i = 0; i < logits.v.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits.v[i]));
    if (occ[std::size_t(i)]) {
      occ_mean += -std::log(p);
      ++n_occ;
    } else {
      null_mean += -std::log(1 - p);
      ++n_null;
    }
  }
  occ_mean /= n_occ;
  null_mean /= n_null;
  CHECK(wbce(logits, occ, 1.0) ==
        doctest::Approx(occ_mean + null_mean).epsilon(1e-9));

  // Monotone in alpha.
  CHECK(wbce(logits, occ, 3.0) >= wbce(logits, occ, 1.0));
  CHECK(wbce(logits, occ, 5.0) >= wbce(logits, occ, 3.0));
}

TEST_CASE("wbce gradient matches finite differences") {
  Rng rng(2);
  Grid4<double> logits(1, 3, 3, 3);
  fill_uniform(logits, rng, -2, 2);
  std::vector<std::uint8_t> occ(27, 0);
  for (std::size_t i = 0; i < 27; ++i) occ[i] = rng.uniform() < 0.5;
  occ[3] = 1;
  const Grid4<double> g = wbce_backward(logits, occ, 3.0);
  CHECK(fd_max_rel_err(logits.v, g.v,
                       [&] { return wbce(logits, occ, 3.0); }) < 1e-4);
}

TEST_CASE("rd_loss components and lambda behavior") {
  const NetConfig cfg = micro_config();
  const auto model = init_model<double>(cfg, 3);
  const auto data = gen_synthetic_dataset(4, 2, 8);

  Rng rng_a(11), rng_b(11), rng_c(11);
  const RdComponents at1 = rd_loss(data, model, 1.0, rng_a, nullptr);
  const RdComponents at2 = rd_loss(data, model, 2.0, rng_b, nullptr);
  CHECK(at1.rate_y == at2.rate_y);
  CHECK(at1.distortion == at2.distortion);
  CHECK(at2.j >= at1.j);
  CHECK(at1.j ==
        doctest::Approx(at1.rate_y + at1.rate_z + at1.distortion).epsilon(1e-12));

  // lambda = 0: pure rate objective, no gradient reaches the synthesis.
  auto grads = zeros_like(model);
  const RdComponents at0 = rd_loss(data, model, 0.0, rng_c, &grads);
  CHECK(at0.j == doctest::Approx(at0.rate_y + at0.rate_z));
  CHECK(grads.synthesis.head.w.abs().maxCoeff() == 0.0);
  CHECK(grads.analysis.head.w.abs().maxCoeff() > 0.0);
}

TEST_CASE("rd_loss gradient check on a spot subset") {
  const NetConfig cfg = micro_config();
  auto model = init_model<double>(cfg, 5);
  const auto data = gen_synthetic_dataset(6, 1, 8);
  const std::uint64_t noise_seed = 99;

  auto grads = zeros_like(model);
  Rng rng(noise_seed);
  rd_loss(data, model, 4.0, rng, &grads);

  auto loss = [&] {
    Rng r(noise_seed);
    return rd_loss(data, model, 4.0, r, nullptr).j;
  };

  // One array per subsystem keeps this unit test quick; the acceptance
  // suite sweeps every parameter.
  std::vector<ArrayX<double>*> picked_p, picked_g;
  const std::vector<std::string> wanted{
      "analysis.s0.down.w", "analysis.head.b", "synthesis.s2.up.w",
      "hyper_a.c2.w",       "hyper_s.head.w",  "psi.m",
      "psi.raw_b"};
  for_each_param(model, [&](const std::string& n, ArrayX<double>& a) {
    if (std::find(wanted.begin(), wanted.end(), n) != wanted.end())
      picked_p.push_back(&a);
  });
  for_each_param(grads, [&](const std::string& n, ArrayX<double>& a) {
    if (std::find(wanted.begin(), wanted.end(), n) != wanted.end())
      picked_g.push_back(&a);
  });
  REQUIRE(picked_p.size() == wanted.size());
  for (std::size_t i = 0; i < picked_p.size(); ++i)
    CHECK(fd_max_rel_err(*picked_p[i], *picked_g[i], loss) < 1e-4);
}

TEST_CASE("rd_loss is independent of the thread count") {
  const NetConfig cfg = micro_config();
  const auto model = init_model<double>(cfg, 7);
  const auto data = gen_synthetic_dataset(8, 4, 8);
  Rng rng_a(5), rng_b(5);
  auto g1 = zeros_like(model);
  auto g4 = zeros_like(model);
  const RdComponents c1 = rd_loss(data, model, 2.0, rng_a, &g1, 1);
  const RdComponents c4 = rd_loss(data, model, 2.0, rng_b, &g4, 4);
  CHECK(c1.j == c4.j);
  std::vector<ArrayX<double>*> a1, a4;
  for_each_param(g1, [&](const std::string&, ArrayX<double>& a) {
    a1.push_back(&a);
  });
  for_each_param(g4, [&](const std::string&, ArrayX<double>& a) {
    a4.push_back(&a);
  });
  for (std::size_t i = 0; i < a1.size(); ++i)
    CHECK((*a1[i] == *a4[i]).all());
}

TEST_CASE("synthetic spheres match the surface-area estimate") {
  for (double r : {4.0, 5.0, 6.0}) {
    const TrainSample s = synthetic_sphere_shell(16, r);
    const double ideal = 4.0 * M_PI * r * r;
    CHECK(double(s.n_occupied) > 0.9 * ideal);
    CHECK(double(s.n_occupied) < 1.1 * ideal);
  }
  for (double r : {8.0, 12.0}) {
    const TrainSample s = synthetic_sphere_shell(32, r);
    const double ideal = 4.0 * M_PI * r * r;
    CHECK(double(s.n_occupied) > 0.9 * ideal);
    CHECK(double(s.n_occupied) < 1.1 * ideal);
  }
}

TEST_CASE("synthetic dataset is deterministic and non-empty") {
  const auto a = gen_synthetic_dataset(123, 16, 16);
  const auto b = gen_synthetic_dataset(123, 16, 16);
  REQUIRE(a.size() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].n_occupied >= 1);
    CHECK(a[i].occupancy == b[i].occupancy);
  }
  const auto c = gen_synthetic_dataset(124, 4, 16);
  CHECK(c[0].occupancy != a[0].occupancy);
}

TEST_CASE("train with zero steps returns the init unchanged") {
  TrainConfig cfg;
  cfg.net = micro_config();
  cfg.cube_size = 8;
  cfg.steps = 0;
  cfg.seed = 77;
  const auto data = gen_synthetic_dataset(9, 4, 8);

  const auto init = init_model<double>(cfg.net, 1234);
  const TrainResult out = train(cfg, data, &init);
  CHECK(serialize_checkpoint(out.model, 0.0) ==
        serialize_checkpoint(init, 0.0));
  CHECK(out.loss0 == out.loss_final);
}

TEST_CASE("training is reproducible and reduces the loss") {
  TrainConfig cfg;
  cfg.net = micro_config();
  cfg.cube_size = 8;
  cfg.steps = 60;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.seed = 4242;
  cfg.log_every = 20;
  const auto data = gen_synthetic_dataset(10, 12, 8);

  const TrainResult a = train(cfg, data);
  const TrainResult b = train(cfg, data);
  CHECK(serialize_checkpoint(a.model, cfg.lambda) ==
        serialize_checkpoint(b.model, cfg.lambda));
  CHECK(a.loss_final < a.loss0);
  CHECK(a.loss_csv.find("step,R_y,R_z,D,J\n") == 0);
  CHECK(a.loss_csv.find("\n60,") != std::string::npos);
}

TEST_CASE("train validates its inputs") {
  TrainConfig cfg;
  cfg.net = micro_config();
  cfg.cube_size = 8;
  cfg.steps = 1;
  CHECK_THROWS_AS(train(cfg, {}), ConfigError);

  TrainSample empty;
  empty.w = 8;
  empty.occupancy.assign(512, 0);
  empty.n_occupied = 0;
  const std::vector<TrainSample> bad{empty};
  CHECK_THROWS_AS(train(cfg, bad), ConfigError);

  cfg.lr = -1;
  CHECK_THROWS_AS(train(cfg, gen_synthetic_dataset(1, 1, 8)), ConfigError);
}
