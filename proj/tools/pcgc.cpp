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

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pcgc/checkpoint.hpp"
#include "pcgc/codec.hpp"
#include "pcgc/metrics.hpp"
#include "pcgc/ply.hpp"
#include "pcgc/threading.hpp"
#include "pcgc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

pcgc::Rational parse_scale(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) {
    const unsigned long v = std::stoul(text);
    return pcgc::Rational(std::uint32_t(v), 1);
  }
  const unsigned long num = std::stoul(text.substr(0, slash));
  const unsigned long den = std::stoul(text.substr(slash + 1));
  return pcgc::Rational(std::uint32_t(num), std::uint32_t(den));
}

std::vector<std::uint8_t> read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pcgc::ParseError("cannot open '" + path + "'");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return data;
}

void write_binary(const std::string& path,
                  std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw pcgc::Error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size()));
}

std::vector<std::string> sorted_ply_files(const std::string& dir) {
  std::vector<std::string> files;
  if (!fs::is_directory(dir))
    throw pcgc::ParseError("'" + dir + "' is not a directory");
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ply")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw pcgc::ParseError("no .ply files in '" + dir + "'");
  return files;
}

pcgc::NetConfig net_from_json(const json& j) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    if (name == "tiny") return pcgc::NetConfig::tiny();
    if (name == "desk") return pcgc::NetConfig::desk();
    throw pcgc::ConfigError("unknown profile '" + name + "'");
  }
  pcgc::NetConfig cfg;
  cfg.profile_id = 0;
  cfg.stages = j.value("stages", cfg.stages);
  cfg.vrn_per_stage = j.value("vrn_per_stage", cfg.vrn_per_stage);
  if (j.contains("base_channels"))
    cfg.base_channels = j.at("base_channels").get<std::vector<int>>();
  cfg.latent_channels = j.value("latent_channels", cfg.latent_channels);
  cfg.hyper_channels = j.value("hyper_channels", cfg.hyper_channels);
  return cfg;
}

pcgc::TrainConfig train_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw pcgc::ParseError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw pcgc::ParseError(path + ": " + e.what());
  }
  pcgc::TrainConfig cfg;
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.cube_size = j.value("cube_size", cfg.cube_size);
  cfg.log_every = j.value("log_every", cfg.log_every);
  if (j.contains("net")) cfg.net = net_from_json(j.at("net"));
  return cfg;
}

pcgc::TrainSample cloud_to_sample(const pcgc::PointSet& ps, int w) {
  pcgc::TrainSample s;
  s.w = w;
  s.occupancy.assign(std::size_t(w) * w * w, 0);
  for (const pcgc::Coord& c : ps.points) {
    if (c[0] >= w || c[1] >= w || c[2] >= w)
      throw pcgc::ConfigError("training sample exceeds cube bounds");
    auto& cell = s.occupancy[(std::size_t(c[0]) * w + c[1]) * w + c[2]];
    if (!cell) {
      cell = 1;
      ++s.n_occupied;
    }
  }
  return s;
}

struct PowerOfTwoCube : CLI::Validator {
  PowerOfTwoCube() {
    name_ = "CUBE";
    func_ = [](const std::string& value) {
      int w = 0;
      try {
        w = std::stoi(value);
      } catch (...) {
        return std::string("cube size must be an integer");
      }
      if (w < 8 || (w & (w - 1)) != 0)
        return std::string("cube size must be a power of two >= 8");
      return std::string();
    };
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learned point cloud geometry codec"};
  app.require_subcommand(1);
  const PowerOfTwoCube cube_validator;

  // encode
  auto* enc = app.add_subcommand("encode", "compress a point cloud");
  std::string enc_input, enc_model, enc_output, enc_scale = "1/1";
  int enc_cube = 16, enc_threads = pcgc::hardware_threads(), enc_precision = 0;
  std::string enc_rho;
  bool enc_factorized = false;
  enc->add_option("--input", enc_input, "input ASCII PLY")->required();
  enc->add_option("--model", enc_model, "model checkpoint")->required();
  enc->add_option("--output", enc_output, "output bitstream")->required();
  enc->add_option("--scale", enc_scale, "rational scale factor a/b");
  enc->add_option("--cube-size", enc_cube, "partition cube size W")
      ->check(cube_validator);
  enc->add_option("--rho-metric", enc_rho, "fine-tune k for d1 or d2")
      ->check(CLI::IsMember({"d1", "d2"}));
  enc->add_flag("--factorized-y", enc_factorized,
                "code latents without the hyperprior");
  enc->add_option("--threads", enc_threads, "cube-level parallelism");
  enc->add_option("--precision", enc_precision, "override input bit depth");

  // decode
  auto* dec = app.add_subcommand("decode", "decompress a bitstream");
  std::string dec_input, dec_model, dec_output;
  int dec_threads = pcgc::hardware_threads();
  dec->add_option("--input", dec_input, "input bitstream")->required();
  dec->add_option("--model", dec_model, "model checkpoint")->required();
  dec->add_option("--output", dec_output, "output ASCII PLY")->required();
  dec->add_option("--threads", dec_threads, "cube-level parallelism");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_data, tr_out, tr_init, tr_curve;
  int tr_threads = pcgc::hardware_threads();
  tr->add_option("--config", tr_config, "JSON training config")->required();
  tr->add_option("--data", tr_data, "directory of sample .ply cubes")
      ->required();
  tr->add_option("--out", tr_out, "output checkpoint")->required();
  tr->add_option("--init", tr_init, "initial checkpoint (transfer init)");
  tr->add_option("--loss-curve", tr_curve, "write loss curve CSV here");
  tr->add_option("--threads", tr_threads, "batch-level parallelism");

  // eval
  auto* ev = app.add_subcommand("eval", "rate-distortion evaluation");
  std::vector<std::string> ev_models, ev_scales{"1/1"};
  std::string ev_corpus, ev_out;
  int ev_cube = 16, ev_threads = pcgc::hardware_threads();
  bool ev_factorized = false;
  ev->add_option("--model", ev_models, "model checkpoint(s)")->required();
  ev->add_option("--corpus", ev_corpus, "directory of .ply clouds")
      ->required();
  ev->add_option("--out", ev_out, "output CSV")->required();
  ev->add_option("--scale", ev_scales, "scale factor(s) a/b");
  ev->add_option("--cube-size", ev_cube, "partition cube size W")
      ->check(cube_validator);
  ev->add_flag("--factorized-y", ev_factorized, "hyperprior-off coding");
  ev->add_option("--threads", ev_threads, "cube-level parallelism");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::uint64_t gen_seed = 1;
  int gen_count = 100, gen_cube = 16;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--count", gen_count, "number of sample cubes");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--cube-size", gen_cube, "cube size W")
      ->check(cube_validator);

  // info
  auto* inf = app.add_subcommand("info", "inspect a bitstream");
  std::string inf_input;
  inf->add_option("--input", inf_input, "input bitstream")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      std::cerr << e.what() << "\n";
      return 1;
    }
    return app.exit(e);  // --help
  }

  try {
    if (*enc) {
      const pcgc::PointSet cloud = pcgc::read_ply_file(enc_input);
      const auto ck = pcgc::load_checkpoint<float>(enc_model);
      pcgc::EncodeOptions opt;
      opt.scale = parse_scale(enc_scale);
      opt.cube_size = enc_cube;
      opt.factorized_y = enc_factorized;
      opt.threads = enc_threads;
      if (!enc_rho.empty())
        opt.rho_metric = enc_rho == "d1" ? pcgc::DistMetric::kD1
                                         : pcgc::DistMetric::kD2;
      if (enc_precision > 0) opt.precision = enc_precision;
      pcgc::BitstreamStats stats;
      const auto bits = pcgc::encode_pointcloud(cloud, ck.model, opt, &stats);
      write_binary(enc_output, bits);
      std::printf("points: %llu\n", (unsigned long long)stats.point_count);
      std::printf("bpp: %.6f\n", stats.bpp());
      std::printf("meta_bits: %llu\n",
                  (unsigned long long)stats.metadata_bits());
      std::printf("payload_bits: %llu\n",
                  (unsigned long long)stats.payload_bits);
    } else if (*dec) {
      const auto data = read_binary(dec_input);
      const auto ck = pcgc::load_checkpoint<float>(dec_model);
      const pcgc::PointSet cloud =
          pcgc::decode_pointcloud(data, ck.model, dec_threads);
      pcgc::write_ply_file(dec_output, cloud);
      std::printf("points: %zu\n", cloud.points.size());
    } else if (*tr) {
      const pcgc::TrainConfig cfg = train_config_from_file(tr_config);
      std::vector<pcgc::TrainSample> samples;
      for (const std::string& f : sorted_ply_files(tr_data))
        samples.push_back(
            cloud_to_sample(pcgc::read_ply_file(f), cfg.cube_size));
      std::optional<pcgc::Model<double>> init;
      if (!tr_init.empty())
        init = pcgc::load_checkpoint<double>(tr_init).model;
      const pcgc::TrainResult result = pcgc::train(
          cfg, samples, init ? &*init : nullptr, tr_threads);
      pcgc::save_checkpoint(tr_out, result.model, cfg.lambda);
      if (!tr_curve.empty()) {
        std::ofstream curve(tr_curve);
        curve << result.loss_csv;
      }
      std::printf("loss0: %.4f\n", result.loss0);
      std::printf("loss_final: %.4f\n", result.loss_final);
    } else if (*ev) {
      std::vector<pcgc::Checkpoint<float>> checkpoints;
      for (const std::string& m : ev_models)
        checkpoints.push_back(pcgc::load_checkpoint<float>(m));
      std::vector<pcgc::RatedModel> models;
      for (const auto& ck : checkpoints)
        models.push_back({&ck.model, ck.lambda});
      std::vector<pcgc::NamedCloud> clouds;
      for (const std::string& f : sorted_ply_files(ev_corpus))
        clouds.push_back({fs::path(f).stem().string(), pcgc::read_ply_file(f)});
      std::vector<pcgc::Rational> scales;
      for (const std::string& s : ev_scales) scales.push_back(parse_scale(s));
      const auto rows = pcgc::eval_run(models, clouds, scales, ev_cube,
                                       ev_factorized, ev_threads);
      std::ofstream out(ev_out);
      if (!out) throw pcgc::Error("cannot write '" + ev_out + "'");
      out << pcgc::eval_csv(rows);
      std::printf("rows: %zu\n", rows.size());
    } else if (*gen) {
      fs::create_directories(gen_out);
      const auto samples =
          pcgc::gen_synthetic_dataset(gen_seed, gen_count, gen_cube);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const pcgc::Cube cube = pcgc::sample_to_cube(samples[i]);
        pcgc::PointSet ps;
        ps.precision = pcgc::bits_for_max_coord(gen_cube - 1);
        for (int a = 0; a < gen_cube; ++a)
          for (int b = 0; b < gen_cube; ++b)
            for (int c = 0; c < gen_cube; ++c)
              if (cube.occupancy[(std::size_t(a) * gen_cube + b) * gen_cube +
                                 c])
                ps.points.push_back({a, b, c});
        char name[64];
        std::snprintf(name, sizeof(name), "sample_%05zu.ply", i);
        pcgc::write_ply_file((fs::path(gen_out) / name).string(), ps);
      }
      std::printf("samples: %zu\n", samples.size());
    } else if (*inf) {
      const auto data = read_binary(inf_input);
      const pcgc::BitstreamInfo info = pcgc::inspect_bitstream(data);
      std::fputs(pcgc::format_info(info).c_str(), stdout);
    }
  } catch (const pcgc::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const pcgc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
