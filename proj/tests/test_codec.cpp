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

#include "pcgc/codec.hpp"
#include "pcgc/trainer.hpp"

using namespace pcgc;

namespace {

NetConfig tiny16() { return NetConfig::tiny(); }

Model<float> tiny_model(std::uint64_t seed) {
  return init_model<float>(tiny16(), seed);
}

Cube shell_cube(std::uint64_t seed, int w = 16) {
  const auto samples = gen_synthetic_dataset(seed, 1, w);
  return sample_to_cube(samples[0]);
}

PointSet small_cloud(std::uint64_t seed) {
  // A few shells placed at different cube positions.
  const auto samples = gen_synthetic_dataset(seed, 4, 16);
  std::vector<Cube> cubes;
  CubeIndexSet set;
  set.grid_levels = 1;
  const Coord positions[4] = {{0, 0, 0}, {1, 0, 0}, {0, 1, 1}, {1, 1, 1}};
  for (int i = 0; i < 4; ++i) {
    Cube c = sample_to_cube(samples[std::size_t(i)]);
    c.grid_pos = positions[i];
    set.indices.push_back(c.grid_pos);
    cubes.push_back(std::move(c));
  }
  const VoxelSet v = assemble(set, cubes, 16);
  PointSet ps = extract(v);
  ps.precision = 5;
  return ps;
}

}  // namespace

TEST_CASE("classify_topk picks the k best with index tie-breaks") {
  const std::vector<float> p{0.9f, 0.8f, 0.1f, 0.4f};
  const auto grid = classify_topk(p, 2);
  CHECK(grid == std::vector<std::uint8_t>{1, 1, 0, 0});

  const std::vector<float> flat(5, 0.3f);
  const auto one = classify_topk(flat, 1);
  CHECK(one == std::vector<std::uint8_t>{1, 0, 0, 0, 0});

  const auto all = classify_topk(p, 4);
  CHECK(all == std::vector<std::uint8_t>{1, 1, 1, 1});
}

TEST_CASE("classify_fixed uses a strict threshold") {
  const std::vector<float> p{0.6f, 0.5f, 0.501f};
  const auto grid = classify_fixed(p, 0.5f);
  CHECK(grid == std::vector<std::uint8_t>{1, 0, 1});
}

TEST_CASE("classify_fixed agrees with top-k at the matching k") {
  Rng rng(4);
  std::vector<float> p(64);
  for (auto& v : p) v = float(rng.uniform());
  const auto fixed = classify_fixed(p, 0.5f);
  const auto k = std::uint32_t(std::count(fixed.begin(), fixed.end(), 1));
  CHECK(classify_topk(p, k) == fixed);
}

TEST_CASE("k fields use 3*log2(W) bits") {
  CHECK(k_field_bits(64) == 18);
  CHECK(k_field_bits(16) == 12);
  BitWriter bw;
  write_k(bw, 1, 16);
  write_k(bw, 4096, 16);  // full cube
  write_k(bw, 137, 16);
  const auto bytes = bw.finish();
  CHECK(bytes.size() == (3 * 12 + 7) / 8);
  BitReader br(bytes);
  CHECK(read_k(br, 16) == 1);
  CHECK(read_k(br, 16) == 4096);
  CHECK(read_k(br, 16) == 137);
  BitWriter bad;
  CHECK_THROWS_AS(write_k(bad, 0, 16), ConfigError);
  CHECK_THROWS_AS(write_k(bad, 4097, 16), ConfigError);
}

TEST_CASE("encode_cube/decode_cube reproduce the quantized latents") {
  const Model<float> model = tiny_model(31);
  for (std::uint64_t seed : {1, 2, 3}) {
    const Cube cube = shell_cube(seed);
    CubeCodingDebug enc_dbg, dec_dbg;
    const CubePayload payload = encode_cube(cube, model, false, &enc_dbg);
    const Cube decoded = decode_cube(payload, model, 16, false, &dec_dbg);
    CHECK(dec_dbg.yhat == enc_dbg.yhat);
    CHECK(dec_dbg.zhat == enc_dbg.zhat);
    CHECK(decoded.k_occupied == cube.k_occupied);
    const auto count = std::count(decoded.occupancy.begin(),
                                  decoded.occupancy.end(), 1);
    CHECK(std::uint32_t(count) == cube.k_occupied);
  }
}

TEST_CASE("encode_cube rejects empty cubes") {
  const Model<float> model = tiny_model(32);
  Cube empty;
  empty.w = 16;
  empty.occupancy.assign(16 * 16 * 16, 0);
  empty.k_occupied = 0;
  CHECK_THROWS_AS(encode_cube(empty, model), ConfigError);
}

TEST_CASE("coded payload stays near the table-entropy estimate") {
  const Model<float> model = tiny_model(33);
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const Cube cube = shell_cube(seed);
    CubeCodingDebug dbg;
    encode_cube(cube, model, false, &dbg);
    const double estimate = dbg.y_estimate_bits + dbg.z_estimate_bits;
    CHECK(double(dbg.payload_bits) <= estimate * 1.02 + 64.0);
  }
}

TEST_CASE("factorized-y mode roundtrips") {
  const Model<float> model = tiny_model(34);
  const Cube cube = shell_cube(5);
  CubeCodingDebug enc_dbg, dec_dbg;
  const CubePayload payload = encode_cube(cube, model, true, &enc_dbg);
  CHECK(payload.y_factors.size() == std::size_t(tiny16().latent_channels));
  const Cube decoded = decode_cube(payload, model, 16, true, &dec_dbg);
  CHECK(dec_dbg.yhat == enc_dbg.yhat);
  CHECK(decoded.k_occupied == cube.k_occupied);
}

TEST_CASE("pointcloud pipeline conserves the transmitted counts") {
  const Model<float> model = tiny_model(35);
  const PointSet cloud = small_cloud(77);
  EncodeOptions opt;
  opt.cube_size = 16;
  opt.threads = 2;
  BitstreamStats stats;
  const auto bits = encode_pointcloud(cloud, model, opt, &stats);
  CHECK(stats.total_bits == 8 * bits.size());
  CHECK(stats.header_bits + stats.octree_bits + stats.k_bits +
            stats.payload_bits ==
        stats.total_bits);

  const BitstreamInfo info = inspect_bitstream(bits);
  std::uint64_t total_k = 0;
  for (const auto& c : info.cubes) total_k += c.k;

  const PointSet decoded = decode_pointcloud(bits, model, 2);
  CHECK(decoded.points.size() == total_k);  // s = 1: no merging
}

TEST_CASE("bitstreams are byte-identical across runs and thread counts") {
  const Model<float> model = tiny_model(36);
  const PointSet cloud = small_cloud(78);
  EncodeOptions opt;
  opt.cube_size = 16;
  opt.threads = 1;
  const auto a = encode_pointcloud(cloud, model, opt);
  opt.threads = 4;
  const auto b = encode_pointcloud(cloud, model, opt);
  CHECK(a == b);
}

TEST_CASE("scaled pipeline decodes at the original precision") {
  const Model<float> model = tiny_model(37);
  PointSet cloud = small_cloud(79);
  cloud.precision = 6;
  EncodeOptions opt;
  opt.cube_size = 16;
  opt.scale = Rational(1, 2);
  const auto bits = encode_pointcloud(cloud, model, opt);
  const PointSet decoded = decode_pointcloud(bits, model);
  CHECK(!decoded.points.empty());
  CHECK(decoded.precision >= 6);
  for (const Coord& c : decoded.points)
    for (int a = 0; a < 3; ++a) CHECK(c[a] <= 63);
}

TEST_CASE("header validation") {
  const Model<float> model = tiny_model(38);
  const PointSet cloud = small_cloud(80);
  EncodeOptions opt;
  opt.cube_size = 16;
  auto bits = encode_pointcloud(cloud, model, opt);

  SUBCASE("version mismatch") {
    bits[4] = 9;
    CHECK_THROWS_AS(decode_pointcloud(bits, model), ParseError);
  }
  SUBCASE("bad magic") {
    bits[0] = 'X';
    CHECK_THROWS_AS(decode_pointcloud(bits, model), ParseError);
  }
  SUBCASE("model mismatch") {
    NetConfig other = tiny16();
    other.latent_channels += 2;
    const Model<float> wrong = init_model<float>(other, 1);
    CHECK_THROWS_AS(decode_pointcloud(bits, wrong), ConfigError);
  }
  SUBCASE("truncation") {
    bits.resize(bits.size() - 3);
    CHECK_THROWS_AS(decode_pointcloud(bits, model), ParseError);
  }
}

TEST_CASE("bad cube sizes are rejected") {
  const Model<float> model = tiny_model(39);
  const PointSet cloud = small_cloud(81);
  EncodeOptions opt;
  opt.cube_size = 12;
  CHECK_THROWS_AS(encode_pointcloud(cloud, model, opt), ConfigError);
  opt.cube_size = 4;
  CHECK_THROWS_AS(encode_pointcloud(cloud, model, opt), ConfigError);
}

TEST_CASE("tune_rho returns 1.0 on perfect probabilities") {
  for (auto metric : {DistMetric::kD1, DistMetric::kD2}) {
    const Cube cube = shell_cube(21);
    std::vector<float> p(cube.occupancy.size());
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] = cube.occupancy[i] ? 1.0f : 0.0f;
    const RhoResult r = tune_rho(cube, p, metric);
    CHECK(r.rho == 1.0);
    CHECK(r.k_f == cube.k_occupied);
  }
}

TEST_CASE("tune_rho stays inside the open interval (0.5, 2)") {
  Rng rng(9);
  const Cube cube = shell_cube(22);
  std::vector<float> p(cube.occupancy.size());
  for (auto& v : p) v = float(rng.uniform());
  for (auto metric : {DistMetric::kD1, DistMetric::kD2}) {
    const RhoResult r = tune_rho(cube, p, metric);
    CHECK(r.rho > 0.5);
    CHECK(r.rho < 2.0);
    CHECK(r.k_f >= 1);
  }
}

TEST_CASE("rho-tuned encode still decodes cleanly") {
  const Model<float> model = tiny_model(40);
  const PointSet cloud = small_cloud(82);
  EncodeOptions opt;
  opt.cube_size = 16;
  opt.rho_metric = DistMetric::kD1;
  const auto bits = encode_pointcloud(cloud, model, opt);
  const PointSet decoded = decode_pointcloud(bits, model);
  const BitstreamInfo info = inspect_bitstream(bits);
  std::uint64_t total_k = 0;
  for (const auto& c : info.cubes) total_k += c.k;
  CHECK(decoded.points.size() == total_k);
}

TEST_CASE("info formatting is stable and complete") {
  const Model<float> model = tiny_model(41);
  const PointSet cloud = small_cloud(83);
  EncodeOptions opt;
  opt.cube_size = 16;
  const auto bits = encode_pointcloud(cloud, model, opt);
  const std::string text = format_info(inspect_bitstream(bits));
  CHECK(text.find("version: 1") != std::string::npos);
  CHECK(text.find("cube_size: 16") != std::string::npos);
  CHECK(text.find("cubes: 4") != std::string::npos);
  CHECK(text.find("bpp:") != std::string::npos);
  CHECK(text == format_info(inspect_bitstream(bits)));
}
