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

#include "pcgc/trainer.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "pcgc/threading.hpp"

namespace pcgc {

TrainSample cube_to_sample(const Cube& cube) {
  return TrainSample{cube.occupancy, cube.w, cube.k_occupied};
}

Cube sample_to_cube(const TrainSample& sample) {
  Cube cube;
  cube.w = sample.w;
  cube.occupancy = sample.occupancy;
  cube.k_occupied = sample.n_occupied;
  return cube;
}

namespace {

Grid4<double> sample_to_grid(const TrainSample& s) {
  Grid4<double> g = Grid4<double>::cube(s.w);
  for (Eigen::Index i = 0; i < g.v.size(); ++i)
    g.v[i] = double(s.occupancy[std::size_t(i)]);
  return g;
}

struct SampleRates {
  double rate_y = 0.0, rate_z = 0.0, distortion = 0.0;
};

// Forward + optional backward of the full objective on one sample, with the
// noise tensors supplied by the caller.
SampleRates sample_loss(const TrainSample& sample, const Model<double>& model,
                        double lambda, double alpha,
                        const ArrayX<double>& noise_y,
                        const ArrayX<double>& noise_z, double inv_batch,
                        Model<double>* grads) {
  const NetConfig& cfg = model.cfg;
  const int ys = cfg.y_spatial(sample.w);

  const Grid4<double> x = sample_to_grid(sample);
  AnalysisCache<double> ca;
  const Grid4<double> y =
      analysis(x, model.analysis, grads ? &ca : nullptr);
  HyperAnalysisCache<double> cha;
  const Grid4<double> z =
      hyper_analysis(y, model.hyper_a, grads ? &cha : nullptr);

  Grid4<double> y_noisy = y;
  y_noisy.v += noise_y;
  Grid4<double> z_noisy = z;
  z_noisy.v += noise_z;

  HyperSynthesisCache<double> chs;
  const MuSigma<double> ms = hyper_synthesis(z_noisy, model.hyper_s, ys, ys,
                                             ys, grads ? &chs : nullptr);

  SampleRates out;

  // Conditional rate of the noisy latents.
  Grid4<double> g_y_rate(y.c, y.d, y.h, y.w);
  Grid4<double> g_mu(ms.mu.c, ms.mu.d, ms.mu.h, ms.mu.w);
  Grid4<double> g_sigma = g_mu;
  for (Eigen::Index i = 0; i < y_noisy.v.size(); ++i) {
    const auto lb = laplace_bin_log2_mass_grad(y_noisy.v[i], ms.mu.v[i],
                                               ms.sigma.v[i]);
    out.rate_y -= lb.log2_mass;
    if (grads) {
      g_y_rate.v[i] = -lb.d_t * inv_batch;
      g_mu.v[i] = -lb.d_mu * inv_batch;
      g_sigma.v[i] = -lb.d_b * inv_batch;
    }
  }

  // Factorized rate of the noisy hyperprior.
  Grid4<double> g_z_rate(z.c, z.d, z.h, z.w);
  ArrayX<double> g_psi_m = ArrayX<double>::Zero(model.psi.m.size());
  ArrayX<double> g_psi_raw = ArrayX<double>::Zero(model.psi.raw_b.size());
  const Eigen::Index z_sp = z.spatial();
  for (Eigen::Index i = 0; i < z_noisy.v.size(); ++i) {
    const int c = int(i / z_sp);
    const double raw = model.psi.raw_b[c];
    const double b = clamped_exp_scale(raw);
    const auto lb =
        laplace_bin_log2_mass_grad(z_noisy.v[i], model.psi.m[c], b);
    out.rate_z -= lb.log2_mass;
    if (grads) {
      g_z_rate.v[i] = -lb.d_t * inv_batch;
      g_psi_m[c] -= lb.d_mu * inv_batch;
      const bool inside = raw > std::log(kSigmaMin) && raw < std::log(kSigmaMax);
      if (inside) g_psi_raw[c] -= lb.d_b * b * inv_batch;
    }
  }

  // Distortion through the synthesis of the noisy latents.
  SynthesisCache<double> cs;
  const Grid4<double> logits =
      synthesis(y_noisy, model.synthesis, grads ? &cs : nullptr);
  out.distortion = wbce(logits, std::span<const std::uint8_t>(sample.occupancy),
                        alpha);
  if (!grads) return out;

  Model<double>& g = *grads;
  g.psi.m += g_psi_m;
  g.psi.raw_b += g_psi_raw;

  Grid4<double> g_logits =
      wbce_backward(logits, std::span<const std::uint8_t>(sample.occupancy),
                    alpha);
  g_logits.v *= lambda * inv_batch;
  Grid4<double> g_y = synthesis_backward(g_logits, model.synthesis, cs,
                                         g.synthesis);
  g_y.v += g_y_rate.v;  // noise passes gradients through unchanged

  Grid4<double> g_z = hyper_synthesis_backward(g_mu, g_sigma, model.hyper_s,
                                               chs, g.hyper_s);
  g_z.v += g_z_rate.v;

  Grid4<double> g_y2 = hyper_analysis_backward(g_z, model.hyper_a, cha,
                                               g.hyper_a);
  g_y.v += g_y2.v;

  analysis_backward(g_y, model.analysis, ca, g.analysis);
  return out;
}

}  // namespace

RdComponents rd_loss(std::span<const TrainSample> batch,
                     const Model<double>& model, double lambda, Rng& rng,
                     Model<double>* grads, int threads, double alpha) {
  if (batch.empty()) throw ConfigError("rd_loss: empty batch");
  const NetConfig& cfg = model.cfg;
  const int w = batch[0].w;
  if (!cfg.compatible_cube(w))
    throw ConfigError("rd_loss: cube size incompatible with network");
  const int ys = cfg.y_spatial(w), zs = cfg.z_spatial(w);
  const Eigen::Index ny = Eigen::Index(cfg.latent_channels) * ys * ys * ys;
  const Eigen::Index nz = Eigen::Index(cfg.hyper_channels) * zs * zs * zs;

  // Noise is drawn serially, per sample, before any parallel work.
  std::vector<ArrayX<double>> noise_y(batch.size()), noise_z(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    noise_y[s].resize(ny);
    for (Eigen::Index i = 0; i < ny; ++i) noise_y[s][i] = rng.uniform() - 0.5;
    noise_z[s].resize(nz);
    for (Eigen::Index i = 0; i < nz; ++i) noise_z[s][i] = rng.uniform() - 0.5;
  }

  const double inv_batch = 1.0 / double(batch.size());
  std::vector<SampleRates> rates(batch.size());
  std::vector<Model<double>> sample_grads;
  if (grads) sample_grads.assign(batch.size(), zeros_like(model));

  parallel_for(batch.size(), threads, [&](std::size_t s) {
    rates[s] = sample_loss(batch[s], model, lambda, alpha, noise_y[s],
                           noise_z[s], inv_batch,
                           grads ? &sample_grads[s] : nullptr);
  });

  if (grads) {
    // Reduce in sample order so results do not depend on the thread count.
    std::vector<ArrayX<double>*> dst;
    for_each_param(*grads, [&](const std::string&, ArrayX<double>& a) {
      dst.push_back(&a);
    });
    for (std::size_t s = 0; s < batch.size(); ++s) {
      std::vector<ArrayX<double>*> src;
      for_each_param(sample_grads[s], [&](const std::string&, ArrayX<double>& a) {
        src.push_back(&a);
      });
      for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
    }
  }

  RdComponents out;
  for (const SampleRates& r : rates) {
    out.rate_y += r.rate_y * inv_batch;
    out.rate_z += r.rate_z * inv_batch;
    out.distortion += r.distortion * inv_batch;
  }
  out.j = out.rate_y + out.rate_z + lambda * out.distortion;
  return out;
}

TrainResult train(const TrainConfig& config, std::span<const TrainSample> data,
                  const Model<double>* init, int threads) {
  config.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  for (const TrainSample& s : data) {
    if (s.w != config.cube_size)
      throw ConfigError("train: sample cube size mismatch");
    if (s.n_occupied == 0) throw ConfigError("train: empty sample");
  }

  TrainResult result;
  if (init) {
    if (!(init->cfg == config.net))
      throw ConfigError("train: init checkpoint config mismatch");
    result.model = *init;
  } else {
    result.model = init_model<double>(config.net, config.seed);
  }

  Model<double> grads = zeros_like(result.model);
  Model<double> adam_m = zeros_like(result.model);
  Model<double> adam_v = zeros_like(result.model);

  Rng batch_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Rng noise_rng(config.seed ^ 0x517cc1b727220a95ULL);
  const std::uint64_t eval_seed = config.seed ^ 0x2545f4914f6cdd1dULL;

  const std::size_t eval_n = std::min<std::size_t>(32, data.size());
  const std::span<const TrainSample> eval_set = data.subspan(0, eval_n);
  auto eval_loss = [&]() {
    Rng eval_rng(eval_seed);
    return rd_loss(eval_set, result.model, config.lambda, eval_rng, nullptr,
                   threads, config.alpha);
  };

  std::ostringstream csv;
  csv << "step,R_y,R_z,D,J\n";
  auto log_row = [&](long step, const RdComponents& c) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%ld,%.4f,%.4f,%.6f,%.4f\n", step, c.rate_y,
                  c.rate_z, c.distortion, c.j);
    csv << buf;
  };

  const RdComponents first = eval_loss();
  result.loss0 = first.j;
  log_row(0, first);

  std::vector<TrainSample> batch(std::size_t(config.batch));
  for (long step = 1; step <= config.steps; ++step) {
    for (auto& b : batch)
      b = data[std::size_t(batch_rng.uniform_int(0, std::int64_t(data.size()) - 1))];

    for_each_param(grads,
                   [](const std::string&, ArrayX<double>& a) { a.setZero(); });
    const RdComponents c = rd_loss(batch, result.model, config.lambda,
                                   noise_rng, &grads, threads, config.alpha);
    if (!std::isfinite(c.j))
      throw Error("train: loss diverged at step " + std::to_string(step));

    std::vector<ArrayX<double>*> ps, gs, ms, vs;
    for_each_param(result.model,
                   [&](const std::string&, ArrayX<double>& a) { ps.push_back(&a); });
    for_each_param(grads,
                   [&](const std::string&, ArrayX<double>& a) { gs.push_back(&a); });
    for_each_param(adam_m,
                   [&](const std::string&, ArrayX<double>& a) { ms.push_back(&a); });
    for_each_param(adam_v,
                   [&](const std::string&, ArrayX<double>& a) { vs.push_back(&a); });
    for (std::size_t i = 0; i < ps.size(); ++i)
      adam_step(*ps[i], *gs[i], *ms[i], *vs[i], step, config.lr, config.beta1,
                config.beta2, config.adam_eps);

    if (config.log_every > 0 &&
        (step % config.log_every == 0 || step == config.steps))
      log_row(step, c);
  }

  const RdComponents last = eval_loss();
  result.loss_final = last.j;
  result.loss_csv = csv.str();
  return result;
}

// ---- synthetic shapes -------------------------------------------------------

namespace {

struct Shape {
  int kind = 0;  // 0 sphere, 1 box, 2 cylinder, 3 superquadric
  Eigen::Vector3d center;
  Eigen::Matrix3d rot;  // world -> local
  double r = 4;         // sphere/cylinder radius
  Eigen::Vector3d half; // box half extents / superquadric axes
  double cyl_h = 4;     // cylinder half height
  double e1 = 1, e2 = 1;

  double sdf(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d q = rot * (p - center);
    switch (kind) {
      case 0:
        return q.norm() - r;
      case 1: {
        const Eigen::Vector3d d = q.cwiseAbs() - half;
        const Eigen::Vector3d dpos = d.cwiseMax(0.0);
        return dpos.norm() + std::min(d.maxCoeff(), 0.0);
      }
      case 2: {
        const double dr = std::hypot(q.x(), q.y()) - r;
        const double dz = std::abs(q.z()) - cyl_h;
        const double outside =
            std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
        return outside + std::min(std::max(dr, dz), 0.0);
      }
      default: {
        auto f = [&](const Eigen::Vector3d& v) {
          const double gx = std::pow(std::abs(v.x() / half.x()), 2.0 / e2);
          const double gy = std::pow(std::abs(v.y() / half.y()), 2.0 / e2);
          const double gz = std::pow(std::abs(v.z() / half.z()), 2.0 / e1);
          return std::pow(gx + gy, e2 / e1) + gz - 1.0;
        };
        // First-order distance estimate from a finite-difference gradient.
        const double v0 = f(q);
        const double h = 0.05;
        const double gx = (f(q + Eigen::Vector3d(h, 0, 0)) -
                           f(q - Eigen::Vector3d(h, 0, 0))) /
                          (2 * h);
        const double gy = (f(q + Eigen::Vector3d(0, h, 0)) -
                           f(q - Eigen::Vector3d(0, h, 0))) /
                          (2 * h);
        const double gz = (f(q + Eigen::Vector3d(0, 0, h)) -
                           f(q - Eigen::Vector3d(0, 0, h))) /
                          (2 * h);
        const double gn = std::max(std::sqrt(gx * gx + gy * gy + gz * gz), 1e-6);
        return v0 / gn;
      }
    }
  }
};

Eigen::Matrix3d random_rotation(Rng& rng) {
  // Shoemake's uniform quaternion from three uniforms.
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double two_pi = 2.0 * M_PI;
  const Eigen::Quaterniond q(
      std::sqrt(1 - u1) * std::sin(two_pi * u2),
      std::sqrt(1 - u1) * std::cos(two_pi * u2),
      std::sqrt(u1) * std::sin(two_pi * u3),
      std::sqrt(u1) * std::cos(two_pi * u3));
  return q.normalized().toRotationMatrix();
}

TrainSample rasterize_shell(const Shape& shape, int w) {
  TrainSample s;
  s.w = w;
  s.occupancy.assign(std::size_t(w) * w * w, 0);
  std::uint32_t count = 0;
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < w; ++k) {
        const double d = shape.sdf(Eigen::Vector3d(i, j, k));
        if (std::abs(d) <= 0.5) {
          s.occupancy[(std::size_t(i) * w + j) * w + k] = 1;
          ++count;
        }
      }
  s.n_occupied = count;
  return s;
}

}  // namespace

TrainSample synthetic_sphere_shell(int w, double radius) {
  Shape shape;
  shape.kind = 0;
  const double c0 = double(w - 1) / 2.0;
  shape.center = Eigen::Vector3d(c0, c0, c0);
  shape.rot = Eigen::Matrix3d::Identity();
  shape.r = radius;
  return rasterize_shell(shape, w);
}

std::vector<TrainSample> gen_synthetic_dataset(std::uint64_t seed, int count,
                                               int w) {
  if (w < 8) throw ConfigError("gen_synthetic_dataset: cube size too small");
  Rng rng(seed);
  const double c0 = double(w - 1) / 2.0;
  const double size_hi = std::max(3.0, double(w) / 2.0 - 3.5);

  std::vector<TrainSample> out;
  out.reserve(std::size_t(count));
  while (int(out.size()) < count) {
    Shape shape;
    shape.kind = int(rng.uniform_int(0, 3));
    const double jitter = 1.0;
    shape.center = Eigen::Vector3d(c0 + rng.uniform(-jitter, jitter),
                                   c0 + rng.uniform(-jitter, jitter),
                                   c0 + rng.uniform(-jitter, jitter));
    shape.rot = shape.kind == 0 ? Eigen::Matrix3d::Identity()
                                : random_rotation(rng);
    shape.r = rng.uniform(3.0, size_hi);
    shape.half = Eigen::Vector3d(rng.uniform(2.5, size_hi),
                                 rng.uniform(2.5, size_hi),
                                 rng.uniform(2.5, size_hi));
    shape.cyl_h = rng.uniform(2.5, size_hi);
    shape.e1 = rng.uniform(0.7, 1.5);
    shape.e2 = rng.uniform(0.7, 1.5);
    TrainSample s = rasterize_shell(shape, w);
    if (s.n_occupied >= 1) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pcgc
