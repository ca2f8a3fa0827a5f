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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcgc/entropy.hpp"
#include "pcgc/geometry.hpp"
#include "pcgc/transforms.hpp"

namespace pcgc {

struct TrainConfig {
  double lambda = 16.0;
  double alpha = 3.0;   // null-voxel weight in the WBCE distortion
  double lr = 1e-5;
  int batch = 8;
  long steps = 0;
  std::uint64_t seed = 1;
  int cube_size = 16;
  NetConfig net = NetConfig::desk();
  long log_every = 50;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  void validate() const {
    if (!(lambda >= 0)) throw ConfigError("train: lambda must be >= 0");
    if (!(alpha > 0)) throw ConfigError("train: alpha must be > 0");
    if (!(lr > 0)) throw ConfigError("train: lr must be > 0");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
    net.validate();
    if (!net.compatible_cube(cube_size))
      throw ConfigError("train: cube size incompatible with network");
  }
};

struct TrainSample {
  std::vector<std::uint8_t> occupancy;  // w^3 flat grid
  int w = 0;
  std::uint32_t n_occupied = 0;
};

// Weighted binary cross-entropy over logits, natural log, evaluated through
// softplus so saturated logits stay finite. The null-voxel term is dropped
// when the cube is full.
template <typename S>
S wbce(const Grid4<S>& logits, std::span<const std::uint8_t> occupancy,
       S alpha);

template <typename S>
Grid4<S> wbce_backward(const Grid4<S>& logits,
                       std::span<const std::uint8_t> occupancy, S alpha);

struct RdComponents {
  double j = 0.0;
  double rate_y = 0.0;  // bits per cube, mean over the batch
  double rate_z = 0.0;
  double distortion = 0.0;
};

// Rate-distortion objective J = R_y + R_z + lambda * D with uniform-noise
// quantization proxies. Noise is drawn from `rng` serially per sample, so
// results do not depend on the thread count. When `grads` is non-null the
// mean-gradient over the batch is accumulated into it.
RdComponents rd_loss(std::span<const TrainSample> batch,
                     const Model<double>& model, double lambda, Rng& rng,
                     Model<double>* grads, int threads = 1,
                     double alpha = 3.0);

struct TrainResult {
  Model<double> model;
  double loss0 = 0.0;        // eval-set J before the first step
  double loss_final = 0.0;   // eval-set J after the last step
  std::string loss_csv;      // step,R_y,R_z,D,J
};

// Adam training loop; deterministic given the config seed. Throws with the
// step index if the loss turns non-finite.
TrainResult train(const TrainConfig& config, std::span<const TrainSample> data,
                  const Model<double>* init = nullptr, int threads = 1);

// Synthetic corpus: one-voxel-thick shells of randomly posed spheres,
// boxes, cylinders and superquadrics.
std::vector<TrainSample> gen_synthetic_dataset(std::uint64_t seed, int count,
                                               int w);

// Shell of a sphere of the given radius centered in the cube.
TrainSample synthetic_sphere_shell(int w, double radius);

TrainSample cube_to_sample(const Cube& cube);
Cube sample_to_cube(const TrainSample& sample);

// ---- template implementations -------------------------------------------

namespace detail {

template <typename S>
S softplus(S x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename S>
S logistic(S x) {
  return 1 / (1 + std::exp(-x));
}

}  // namespace detail

template <typename S>
S wbce(const Grid4<S>& logits, std::span<const std::uint8_t> occupancy,
       S alpha) {
  if (std::size_t(logits.v.size()) != occupancy.size())
    throw ConfigError("wbce: grid size mismatch");
  S occ_sum = 0, null_sum = 0;
  Eigen::Index n_occ = 0, n_null = 0;
  for (Eigen::Index i = 0; i < logits.v.size(); ++i) {
    const S l = logits.v[i];
    if (occupancy[std::size_t(i)]) {
      occ_sum += detail::softplus(-l);  // -ln sigmoid(l)
      ++n_occ;
    } else {
      null_sum += detail::softplus(l);  // -ln(1 - sigmoid(l))
      ++n_null;
    }
  }
  if (n_occ == 0) throw ConfigError("wbce: cube has no occupied voxels");
  S d = occ_sum / S(n_occ);
  if (n_null > 0) d += alpha * null_sum / S(n_null);
  return d;
}

template <typename S>
Grid4<S> wbce_backward(const Grid4<S>& logits,
                       std::span<const std::uint8_t> occupancy, S alpha) {
  Eigen::Index n_occ = 0, n_null = 0;
  for (std::uint8_t o : occupancy) (o ? n_occ : n_null) += 1;
  if (n_occ == 0) throw ConfigError("wbce: cube has no occupied voxels");
  Grid4<S> g = logits;
  for (Eigen::Index i = 0; i < logits.v.size(); ++i) {
    const S p = detail::logistic(logits.v[i]);
    if (occupancy[std::size_t(i)])
      g.v[i] = (p - 1) / S(n_occ);
    else
      g.v[i] = n_null > 0 ? alpha * p / S(n_null) : S(0);
  }
  return g;
}

}  // namespace pcgc
