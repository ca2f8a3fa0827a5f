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

#include <string>
#include <vector>

#include "pcgc/nn.hpp"

namespace pcgc {

// Scale bounds shared by the conditional Laplace heads and the factorized
// model: scale = exp(clamp(raw, ln(kSigmaMin), ln(kSigmaMax))).
inline constexpr double kSigmaMin = 1e-2;
inline constexpr double kSigmaMax = 64.0;

struct NetConfig {
  int stages = 3;
  int vrn_per_stage = 3;
  std::vector<int> base_channels{16, 32, 64};
  int latent_channels = 16;
  int hyper_channels = 8;
  int profile_id = 0;  // 0 custom, 1 tiny, 2 desk

  static NetConfig tiny();
  static NetConfig desk();

  void validate() const;
  bool compatible_cube(int w) const;  // w divisible by 2^stages, w >= 2^stages
  int y_spatial(int w) const { return w >> stages; }
  // Hyper analysis applies two stride-2 convolutions with ceil sizing.
  int z_spatial(int w) const {
    const int a = (y_spatial(w) + 1) / 2;
    return (a + 1) / 2;
  }
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// Voxception-ResNet block: identity plus the channel concatenation of
//   path A: conv3(C/2) -> relu -> conv3(C/2)
//   path B: conv1(C/2) -> relu -> conv3(C/4) -> relu -> conv1(C/2)
template <typename S>
struct VrnParams {
  ConvParams<S> a1, a2, b1, b2, b3;

  static VrnParams make(int channels) {
    if (channels % 2 != 0)
      throw ConfigError("vrn_block: channel count must be even");
    const int half = channels / 2;
    const int quarter = std::max(1, channels / 4);
    VrnParams p;
    p.a1 = ConvParams<S>::conv(channels, half, 3, 1);
    p.a2 = ConvParams<S>::conv(half, half, 3, 1);
    p.b1 = ConvParams<S>::conv(channels, half, 1, 1);
    p.b2 = ConvParams<S>::conv(half, quarter, 3, 1);
    p.b3 = ConvParams<S>::conv(quarter, half, 1, 1);
    return p;
  }
};

template <typename S>
struct VrnCache {
  Grid4<S> x, a1y, b1y, b2y;  // conv inputs / pre-activations
};

template <typename S>
struct AnalysisParams {
  std::vector<ConvParams<S>> down;           // conv3 stride 2, per stage
  std::vector<std::vector<VrnParams<S>>> vrns;
  ConvParams<S> head;                        // conv1 to latent channels
};

template <typename S>
struct SynthesisParams {
  ConvParams<S> head;                        // conv1 from latent channels
  std::vector<std::vector<VrnParams<S>>> vrns;
  std::vector<ConvParams<S>> up;             // deconv3 stride 2, per stage
};

template <typename S>
struct HyperAnalysisParams {
  ConvParams<S> c1, c2, c3;  // conv3 s1, conv3 s2, conv3 s2
};

template <typename S>
struct HyperSynthesisParams {
  ConvParams<S> d1, d2;  // deconv3 s2 x2
  ConvParams<S> head;    // conv3 s1 to 2*latent channels (mu, raw sigma)
};

// Per-channel location/scale of the factorized hyperprior model.
template <typename S>
struct FactorizedParams {
  ArrayX<S> m;
  ArrayX<S> raw_b;
};

template <typename S>
struct Model {
  NetConfig cfg;
  AnalysisParams<S> analysis;
  SynthesisParams<S> synthesis;
  HyperAnalysisParams<S> hyper_a;
  HyperSynthesisParams<S> hyper_s;
  FactorizedParams<S> psi;
};

template <typename S>
Model<S> make_model(const NetConfig& cfg);

// Seeded He-uniform init of all convolutions; psi starts at (0, 0) which
// gives unit scale.
template <typename S>
Model<S> init_model(const NetConfig& cfg, std::uint64_t seed);

// Visits every parameter array in a fixed order with stable names; the
// checkpoint format and the optimizer both rely on this order.
template <typename S, typename F>
void for_each_param(Model<S>& m, F&& f);

template <typename S>
Model<S> zeros_like(const Model<S>& m);

template <typename S>
Eigen::Index param_count(const Model<S>& m);

// --- forward / backward -----------------------------------------------

template <typename S>
Grid4<S> vrn_block(const Grid4<S>& x, const VrnParams<S>& p,
                   VrnCache<S>* cache = nullptr);

template <typename S>
Grid4<S> vrn_block_backward(const Grid4<S>& up, const VrnParams<S>& p,
                            const VrnCache<S>& cache, VrnParams<S>& g);

template <typename S>
struct AnalysisCache {
  std::vector<Grid4<S>> stage_in;             // input to each stride-2 conv
  std::vector<std::vector<VrnCache<S>>> vrn;  // per stage
  Grid4<S> head_in;
};

template <typename S>
Grid4<S> analysis(const Grid4<S>& x, const AnalysisParams<S>& p,
                  AnalysisCache<S>* cache = nullptr);

template <typename S>
Grid4<S> analysis_backward(const Grid4<S>& up, const AnalysisParams<S>& p,
                           const AnalysisCache<S>& cache, AnalysisParams<S>& g);

template <typename S>
struct SynthesisCache {
  Grid4<S> head_in;
  std::vector<std::vector<VrnCache<S>>> vrn;
  std::vector<Grid4<S>> up_in;
};

template <typename S>
Grid4<S> synthesis(const Grid4<S>& y, const SynthesisParams<S>& p,
                   SynthesisCache<S>* cache = nullptr);

template <typename S>
Grid4<S> synthesis_backward(const Grid4<S>& up, const SynthesisParams<S>& p,
                            const SynthesisCache<S>& cache,
                            SynthesisParams<S>& g);

template <typename S>
struct HyperAnalysisCache {
  Grid4<S> c1_in, c2_in, c3_in;  // pre-activations saved as conv inputs
  Grid4<S> r1_pre, r2_pre;
};

template <typename S>
Grid4<S> hyper_analysis(const Grid4<S>& y, const HyperAnalysisParams<S>& p,
                        HyperAnalysisCache<S>* cache = nullptr);

template <typename S>
Grid4<S> hyper_analysis_backward(const Grid4<S>& up,
                                 const HyperAnalysisParams<S>& p,
                                 const HyperAnalysisCache<S>& cache,
                                 HyperAnalysisParams<S>& g);

// Hyper synthesis output: mu is raw, sigma = exp(clamp(raw, ln 1e-2, ln 64)).
template <typename S>
struct MuSigma {
  Grid4<S> mu;
  Grid4<S> sigma;
};

template <typename S>
struct HyperSynthesisCache {
  Grid4<S> d1_in, d2_in, head_in;
  Grid4<S> r1_pre, r2_pre;
  Grid4<S> raw_sigma;
  int y_d = 0, y_h = 0, y_w = 0;
};

// Needs the latent spatial size to undo ceil-divided downsampling.
template <typename S>
MuSigma<S> hyper_synthesis(const Grid4<S>& z, const HyperSynthesisParams<S>& p,
                           int y_d, int y_h, int y_w,
                           HyperSynthesisCache<S>* cache = nullptr);

template <typename S>
Grid4<S> hyper_synthesis_backward(const Grid4<S>& gmu, const Grid4<S>& gsigma,
                                  const HyperSynthesisParams<S>& p,
                                  const HyperSynthesisCache<S>& cache,
                                  HyperSynthesisParams<S>& g);

}  // namespace pcgc

#include "pcgc/transforms_impl.hpp"
