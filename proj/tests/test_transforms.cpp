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
#include "pcgc/transforms.hpp"
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

}  // namespace

TEST_CASE("vrn_block with zero weights is the identity") {
  auto p = VrnParams<double>::make(4);
  Rng rng(1);
  Grid4<double> x(4, 3, 3, 3);
  fill_uniform(x, rng, -2, 2);
  const Grid4<double> y = vrn_block(x, p);
  CHECK((y.v - x.v).abs().maxCoeff() == 0.0);
}

TEST_CASE("vrn_block preserves shape and rejects odd channels") {
  Rng rng(2);
  for (int c : {2, 4, 8}) {
    auto p = VrnParams<double>::make(c);
    Grid4<double> x(c, 2, 2, 2);
    const Grid4<double> y = vrn_block(x, p);
    CHECK(y.c == c);
    CHECK(y.d == 2);
  }
  CHECK_THROWS_AS(VrnParams<double>::make(3), ConfigError);
}

TEST_CASE("vrn_block gradient check") {
  Rng rng(3);
  auto p = VrnParams<double>::make(4);
  for (ConvParams<double>* c : {&p.a1, &p.a2, &p.b1, &p.b2, &p.b3}) {
    fill_uniform(c->w, rng, -0.5, 0.5);
    fill_uniform(c->b, rng, -0.2, 0.2);
  }
  Grid4<double> x(4, 4, 4, 4);
  fill_uniform(x, rng, -1, 1);
  VrnCache<double> cache;
  const Grid4<double> y = vrn_block(x, p, &cache);
  ArrayX<double> r(y.v.size());
  fill_uniform(r, rng, -1, 1);
  Grid4<double> up = y;
  up.v = r;
  auto g = VrnParams<double>::make(4);
  const Grid4<double> gx = vrn_block_backward(up, p, cache, g);

  auto loss = [&] { return (vrn_block(x, p).v * r).sum(); };
  CHECK(fd_max_rel_err(x.v, gx.v, loss) < 1e-4);
  CHECK(fd_max_rel_err(p.a1.w, g.a1.w, loss) < 1e-4);
  CHECK(fd_max_rel_err(p.a2.w, g.a2.w, loss) < 1e-4);
  CHECK(fd_max_rel_err(p.b1.w, g.b1.w, loss) < 1e-4);
  CHECK(fd_max_rel_err(p.b2.w, g.b2.w, loss) < 1e-4);
  CHECK(fd_max_rel_err(p.b3.w, g.b3.w, loss) < 1e-4);
  CHECK(fd_max_rel_err(p.b2.b, g.b2.b, loss) < 1e-4);
}

TEST_CASE("analysis shape contract") {
  NetConfig cfg;
  cfg.stages = 3;
  cfg.vrn_per_stage = 1;
  cfg.base_channels = {4, 4, 8};
  cfg.latent_channels = 8;
  cfg.hyper_channels = 4;
  const auto model = init_model<float>(cfg, 9);
  Grid4<float> x = Grid4<float>::cube(16);
  const Grid4<float> y = analysis(x, model.analysis);
  CHECK(y.c == 8);
  CHECK(y.d == 2);
  CHECK(y.h == 2);
  CHECK(y.w == 2);
  CHECK(y.v.isFinite().all());  // all-zero cube still finite (bias-driven)
}

TEST_CASE("synthesis shape contract and zero-weight bias logits") {
  NetConfig cfg;
  cfg.stages = 3;
  cfg.vrn_per_stage = 1;
  cfg.base_channels = {4, 4, 8};
  cfg.latent_channels = 8;
  cfg.hyper_channels = 4;
  auto model = init_model<float>(cfg, 10);
  Grid4<float> y(8, 2, 2, 2);
  Rng rng(4);
  fill_uniform(y, rng, -1, 1);
  const Grid4<float> logits = synthesis(y, model.synthesis);
  CHECK(logits.c == 1);
  CHECK(logits.d == 16);

  auto zero = make_model<float>(cfg);
  const float bias = 0.75f;
  zero.synthesis.up.back().b[0] = bias;
  const Grid4<float> flat = synthesis(y, zero.synthesis);
  CHECK(flat.v.minCoeff() == bias);
  CHECK(flat.v.maxCoeff() == bias);
}

TEST_CASE("hyper transforms shapes and sigma clamp") {
  NetConfig cfg;
  cfg.stages = 3;
  cfg.vrn_per_stage = 1;
  cfg.base_channels = {4, 4, 8};
  cfg.latent_channels = 8;
  cfg.hyper_channels = 8;
  const auto model = init_model<float>(cfg, 11);

  Grid4<float> y(8, 8, 8, 8);
  Rng rng(5);
  fill_uniform(y, rng, -3, 3);
  const Grid4<float> z = hyper_analysis(y, model.hyper_a);
  CHECK(z.c == 8);
  CHECK(z.d == 2);

  const MuSigma<float> ms = hyper_synthesis(z, model.hyper_s, 8, 8, 8);
  CHECK(ms.mu.c == 8);
  CHECK(ms.mu.d == 8);
  CHECK(ms.sigma.v.minCoeff() >= float(kSigmaMin));
  CHECK(ms.sigma.v.maxCoeff() <= float(kSigmaMax));
}

TEST_CASE("hyper path handles the W=16 ceil sizes") {
  const NetConfig cfg = micro_config();
  const auto model = init_model<float>(cfg, 12);
  Grid4<float> y(2, 2, 2, 2);  // latent of a 16-cube
  Rng rng(6);
  fill_uniform(y, rng, -1, 1);
  const Grid4<float> z = hyper_analysis(y, model.hyper_a);
  CHECK(z.d == 1);
  CHECK(cfg.z_spatial(16) == 1);
  const MuSigma<float> ms = hyper_synthesis(z, model.hyper_s, 2, 2, 2);
  CHECK(ms.mu.d == 2);
}

TEST_CASE("full encode path shape contract") {
  const NetConfig cfg = micro_config();
  const auto model = init_model<float>(cfg, 13);
  for (int w : {32, 64}) {
    Grid4<float> x = Grid4<float>::cube(w);
    x.at(0, w / 2, w / 2, w / 2) = 1.0f;
    const Grid4<float> y = analysis(x, model.analysis);
    CHECK(y.d == w / 8);
    const Grid4<float> z = hyper_analysis(y, model.hyper_a);
    CHECK(z.d == w / 32);
  }
}

TEST_CASE("analysis/synthesis/hyper gradient check on a micro config") {
  const NetConfig cfg = micro_config();
  auto model = init_model<double>(cfg, 14);
  Rng rng(7);
  Grid4<double> x = Grid4<double>::cube(8);
  for (Eigen::Index i = 0; i < x.v.size(); ++i)
    x.v[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;

  // Analysis gradients.
  {
    AnalysisCache<double> cache;
    const Grid4<double> y = analysis(x, model.analysis, &cache);
    ArrayX<double> r(y.v.size());
    fill_uniform(r, rng, -1, 1);
    Grid4<double> up = y;
    up.v = r;
    auto grads = zeros_like(model);
    analysis_backward(up, model.analysis, cache, grads.analysis);
    auto loss = [&] { return (analysis(x, model.analysis).v * r).sum(); };
    CHECK(fd_max_rel_err(model.analysis.down[0].w, grads.analysis.down[0].w,
                         loss) < 1e-4);
    CHECK(fd_max_rel_err(model.analysis.vrns[1][0].a1.w,
                         grads.analysis.vrns[1][0].a1.w, loss) < 1e-4);
    CHECK(fd_max_rel_err(model.analysis.head.w, grads.analysis.head.w, loss) <
          1e-4);
  }

  // Synthesis gradients.
  {
    Grid4<double> y(cfg.latent_channels, 1, 1, 1);
    fill_uniform(y, rng, -1, 1);
    SynthesisCache<double> cache;
    const Grid4<double> logits = synthesis(y, model.synthesis, &cache);
    ArrayX<double> r(logits.v.size());
    fill_uniform(r, rng, -1, 1);
    Grid4<double> up = logits;
    up.v = r;
    auto grads = zeros_like(model);
    const Grid4<double> gy =
        synthesis_backward(up, model.synthesis, cache, grads.synthesis);
    auto loss = [&] { return (synthesis(y, model.synthesis).v * r).sum(); };
    CHECK(fd_max_rel_err(y.v, gy.v, loss) < 1e-4);
    CHECK(fd_max_rel_err(model.synthesis.up[2].w, grads.synthesis.up[2].w,
                         loss) < 1e-4);
    CHECK(fd_max_rel_err(model.synthesis.head.w, grads.synthesis.head.w,
                         loss) < 1e-4);
  }

  // Hyper path gradients through both heads.
  {
    Grid4<double> y(cfg.latent_channels, 2, 2, 2);
    fill_uniform(y, rng, -1, 1);
    HyperAnalysisCache<double> ca;
    const Grid4<double> z = hyper_analysis(y, model.hyper_a, &ca);
    HyperSynthesisCache<double> cs;
    const MuSigma<double> ms = hyper_synthesis(z, model.hyper_s, 2, 2, 2, &cs);
    ArrayX<double> r1(ms.mu.v.size()), r2(ms.sigma.v.size());
    fill_uniform(r1, rng, -1, 1);
    fill_uniform(r2, rng, -1, 1);
    Grid4<double> gmu = ms.mu;
    gmu.v = r1;
    Grid4<double> gsigma = ms.sigma;
    gsigma.v = r2;
    auto grads = zeros_like(model);
    const Grid4<double> gz =
        hyper_synthesis_backward(gmu, gsigma, model.hyper_s, cs, grads.hyper_s);
    const Grid4<double> gy =
        hyper_analysis_backward(gz, model.hyper_a, ca, grads.hyper_a);
    auto loss = [&] {
      const Grid4<double> zz = hyper_analysis(y, model.hyper_a);
      const MuSigma<double> mm = hyper_synthesis(zz, model.hyper_s, 2, 2, 2);
      return (mm.mu.v * r1).sum() + (mm.sigma.v * r2).sum();
    };
    CHECK(fd_max_rel_err(y.v, gy.v, loss) < 1e-4);
    CHECK(fd_max_rel_err(model.hyper_a.c1.w, grads.hyper_a.c1.w, loss) < 1e-4);
    CHECK(fd_max_rel_err(model.hyper_s.head.w, grads.hyper_s.head.w, loss) <
          1e-4);
    CHECK(fd_max_rel_err(model.hyper_s.d1.w, grads.hyper_s.d1.w, loss) < 1e-4);
  }
}

TEST_CASE("checkpoint roundtrip is exact") {
  const NetConfig cfg = micro_config();
  const auto model = init_model<double>(cfg, 21);
  const std::string bytes = serialize_checkpoint(model, 4.0);
  const auto loaded = parse_checkpoint<double>(bytes);
  CHECK(loaded.lambda == 4.0);
  CHECK(serialize_checkpoint(loaded.model, 4.0) == bytes);

  // Bit-identical inference through a save/load cycle.
  const auto as_float = parse_checkpoint<float>(bytes);
  const auto direct = parse_checkpoint<float>(bytes);
  Grid4<float> x = Grid4<float>::cube(8);
  x.at(0, 3, 3, 3) = 1.0f;
  const Grid4<float> y1 = analysis(x, as_float.model.analysis);
  const Grid4<float> y2 = analysis(x, direct.model.analysis);
  CHECK((y1.v == y2.v).all());
}

TEST_CASE("checkpoint rejects corrupt data") {
  const auto model = init_model<double>(micro_config(), 22);
  std::string bytes = serialize_checkpoint(model, 1.0);
  CHECK_THROWS_AS(parse_checkpoint<double>(bytes.substr(0, 40)), ParseError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint<double>(bad), ParseError);
}

TEST_CASE("parameter traversal order is stable") {
  auto model = init_model<double>(micro_config(), 23);
  std::vector<std::string> names;
  for_each_param(model, [&](const std::string& n, ArrayX<double>&) {
    names.push_back(n);
  });
  REQUIRE(!names.empty());
  CHECK(names.front() == "analysis.s0.down.w");
  CHECK(names.back() == "psi.raw_b");
  CHECK(param_count(model) > 0);
}
