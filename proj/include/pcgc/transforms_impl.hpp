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

#include <cmath>

namespace pcgc {

inline NetConfig NetConfig::tiny() {
  NetConfig c;
  c.stages = 3;
  c.vrn_per_stage = 1;
  c.base_channels = {4, 8, 16};
  c.latent_channels = 16;
  c.hyper_channels = 8;
  c.profile_id = 1;
  return c;
}

inline NetConfig NetConfig::desk() {
  NetConfig c;  // defaults already match the desk profile
  c.profile_id = 2;
  return c;
}

inline void NetConfig::validate() const {
  if (stages < 1 || stages > 6) throw ConfigError("net: stages out of range");
  if (vrn_per_stage < 0 || vrn_per_stage > 8)
    throw ConfigError("net: vrn_per_stage out of range");
  if (int(base_channels.size()) != stages)
    throw ConfigError("net: base_channels must list one entry per stage");
  for (int c : base_channels)
    if (c < 2 || c % 2 != 0)
      throw ConfigError("net: stage channels must be even and >= 2");
  if (latent_channels < 1 || hyper_channels < 1)
    throw ConfigError("net: latent/hyper channels must be >= 1");
}

inline bool NetConfig::compatible_cube(int w) const {
  return w >= (1 << stages) && w % (1 << stages) == 0;
}

namespace detail {

template <typename S>
Grid4<S> concat_channels(const Grid4<S>& a, const Grid4<S>& b) {
  Grid4<S> out(a.c + b.c, a.d, a.h, a.w);
  out.v.head(a.v.size()) = a.v;
  out.v.tail(b.v.size()) = b.v;
  return out;
}

template <typename S>
Grid4<S> slice_channels(const Grid4<S>& x, int c0, int c1) {
  Grid4<S> out(c1 - c0, x.d, x.h, x.w);
  out.v = x.v.segment(Eigen::Index(c0) * x.spatial(),
                      Eigen::Index(c1 - c0) * x.spatial());
  return out;
}

}  // namespace detail

template <typename S>
Grid4<S> vrn_block(const Grid4<S>& x, const VrnParams<S>& p,
                   VrnCache<S>* cache) {
  Grid4<S> a1y = conv3d(x, p.a1);
  Grid4<S> a2y = conv3d(relu(a1y), p.a2);
  Grid4<S> b1y = conv3d(x, p.b1);
  Grid4<S> b2y = conv3d(relu(b1y), p.b2);
  Grid4<S> b3y = conv3d(relu(b2y), p.b3);
  Grid4<S> out = x;
  const Eigen::Index half = a2y.v.size();
  out.v.head(half) += a2y.v;
  out.v.tail(b3y.v.size()) += b3y.v;
  if (cache) {
    cache->x = x;
    cache->a1y = std::move(a1y);
    cache->b1y = std::move(b1y);
    cache->b2y = std::move(b2y);
  }
  return out;
}

template <typename S>
Grid4<S> vrn_block_backward(const Grid4<S>& up, const VrnParams<S>& p,
                            const VrnCache<S>& cache, VrnParams<S>& g) {
  const int half = up.c / 2;
  Grid4<S> up_a = detail::slice_channels(up, 0, half);
  Grid4<S> up_b = detail::slice_channels(up, half, up.c);

  Grid4<S> ga = conv3d_backward(up_a, relu(cache.a1y), p.a2, g.a2.w, g.a2.b);
  ga = relu_backward(ga, cache.a1y);
  Grid4<S> gx_a = conv3d_backward(ga, cache.x, p.a1, g.a1.w, g.a1.b);

  Grid4<S> gb = conv3d_backward(up_b, relu(cache.b2y), p.b3, g.b3.w, g.b3.b);
  gb = relu_backward(gb, cache.b2y);
  gb = conv3d_backward(gb, relu(cache.b1y), p.b2, g.b2.w, g.b2.b);
  gb = relu_backward(gb, cache.b1y);
  Grid4<S> gx_b = conv3d_backward(gb, cache.x, p.b1, g.b1.w, g.b1.b);

  Grid4<S> gx = up;
  gx.v += gx_a.v + gx_b.v;
  return gx;
}

template <typename S>
Model<S> make_model(const NetConfig& cfg) {
  cfg.validate();
  Model<S> m;
  m.cfg = cfg;

  int in_c = 1;
  for (int i = 0; i < cfg.stages; ++i) {
    const int out_c = cfg.base_channels[std::size_t(i)];
    m.analysis.down.push_back(ConvParams<S>::conv(in_c, out_c, 3, 2));
    std::vector<VrnParams<S>> vrns;
    for (int j = 0; j < cfg.vrn_per_stage; ++j)
      vrns.push_back(VrnParams<S>::make(out_c));
    m.analysis.vrns.push_back(std::move(vrns));
    in_c = out_c;
  }
  m.analysis.head = ConvParams<S>::conv(in_c, cfg.latent_channels, 1, 1);

  m.synthesis.head = ConvParams<S>::conv(cfg.latent_channels, in_c, 1, 1);
  for (int i = cfg.stages - 1; i >= 0; --i) {
    const int ch = cfg.base_channels[std::size_t(i)];
    std::vector<VrnParams<S>> vrns;
    for (int j = 0; j < cfg.vrn_per_stage; ++j)
      vrns.push_back(VrnParams<S>::make(ch));
    m.synthesis.vrns.push_back(std::move(vrns));
    const int out_c = i > 0 ? cfg.base_channels[std::size_t(i - 1)] : 1;
    m.synthesis.up.push_back(ConvParams<S>::deconv(ch, out_c));
  }

  const int cz = cfg.hyper_channels;
  m.hyper_a.c1 = ConvParams<S>::conv(cfg.latent_channels, cz, 3, 1);
  m.hyper_a.c2 = ConvParams<S>::conv(cz, cz, 3, 2);
  m.hyper_a.c3 = ConvParams<S>::conv(cz, cz, 3, 2);

  m.hyper_s.d1 = ConvParams<S>::deconv(cz, cz);
  m.hyper_s.d2 = ConvParams<S>::deconv(cz, cz);
  m.hyper_s.head = ConvParams<S>::conv(cz, 2 * cfg.latent_channels, 3, 1);

  m.psi.m = ArrayX<S>::Zero(cz);
  m.psi.raw_b = ArrayX<S>::Zero(cz);
  return m;
}

template <typename S, typename F>
void for_each_conv(Model<S>& m, F&& f) {
  for (std::size_t i = 0; i < m.analysis.down.size(); ++i) {
    const std::string s = "analysis.s" + std::to_string(i);
    f(s + ".down", m.analysis.down[i]);
    for (std::size_t j = 0; j < m.analysis.vrns[i].size(); ++j) {
      VrnParams<S>& v = m.analysis.vrns[i][j];
      const std::string b = s + ".vrn" + std::to_string(j);
      f(b + ".a1", v.a1);
      f(b + ".a2", v.a2);
      f(b + ".b1", v.b1);
      f(b + ".b2", v.b2);
      f(b + ".b3", v.b3);
    }
  }
  f("analysis.head", m.analysis.head);
  f("synthesis.head", m.synthesis.head);
  for (std::size_t i = 0; i < m.synthesis.up.size(); ++i) {
    const std::string s = "synthesis.s" + std::to_string(i);
    for (std::size_t j = 0; j < m.synthesis.vrns[i].size(); ++j) {
      VrnParams<S>& v = m.synthesis.vrns[i][j];
      const std::string b = s + ".vrn" + std::to_string(j);
      f(b + ".a1", v.a1);
      f(b + ".a2", v.a2);
      f(b + ".b1", v.b1);
      f(b + ".b2", v.b2);
      f(b + ".b3", v.b3);
    }
    f(s + ".up", m.synthesis.up[i]);
  }
  f("hyper_a.c1", m.hyper_a.c1);
  f("hyper_a.c2", m.hyper_a.c2);
  f("hyper_a.c3", m.hyper_a.c3);
  f("hyper_s.d1", m.hyper_s.d1);
  f("hyper_s.d2", m.hyper_s.d2);
  f("hyper_s.head", m.hyper_s.head);
}

template <typename S, typename F>
void for_each_param(Model<S>& m, F&& f) {
  for_each_conv(m, [&](const std::string& name, ConvParams<S>& c) {
    f(name + ".w", c.w);
    f(name + ".b", c.b);
  });
  f("psi.m", m.psi.m);
  f("psi.raw_b", m.psi.raw_b);
}

template <typename S>
Model<S> init_model(const NetConfig& cfg, std::uint64_t seed) {
  Model<S> m = make_model<S>(cfg);
  Rng rng(seed);
  for_each_conv(m, [&](const std::string&, ConvParams<S>& c) {
    he_uniform_init(c, rng);
  });
  return m;
}

template <typename S>
Model<S> zeros_like(const Model<S>& m) {
  Model<S> z = m;
  for_each_param(z, [](const std::string&, ArrayX<S>& a) { a.setZero(); });
  return z;
}

template <typename S>
Eigen::Index param_count(const Model<S>& m) {
  Eigen::Index n = 0;
  for_each_param(const_cast<Model<S>&>(m),
                 [&](const std::string&, ArrayX<S>& a) { n += a.size(); });
  return n;
}

template <typename S>
Grid4<S> analysis(const Grid4<S>& x, const AnalysisParams<S>& p,
                  AnalysisCache<S>* cache) {
  Grid4<S> t = x;
  if (cache) {
    cache->stage_in.clear();
    cache->vrn.assign(p.down.size(), {});
  }
  for (std::size_t i = 0; i < p.down.size(); ++i) {
    if (cache) cache->stage_in.push_back(t);
    t = conv3d(t, p.down[i]);
    if (cache) cache->vrn[i].resize(p.vrns[i].size());
    for (std::size_t j = 0; j < p.vrns[i].size(); ++j)
      t = vrn_block(t, p.vrns[i][j], cache ? &cache->vrn[i][j] : nullptr);
  }
  if (cache) cache->head_in = t;
  return conv3d(t, p.head);
}

template <typename S>
Grid4<S> analysis_backward(const Grid4<S>& up, const AnalysisParams<S>& p,
                           const AnalysisCache<S>& cache,
                           AnalysisParams<S>& g) {
  Grid4<S> t = conv3d_backward(up, cache.head_in, p.head, g.head.w, g.head.b);
  for (std::size_t i = p.down.size(); i-- > 0;) {
    for (std::size_t j = p.vrns[i].size(); j-- > 0;)
      t = vrn_block_backward(t, p.vrns[i][j], cache.vrn[i][j], g.vrns[i][j]);
    t = conv3d_backward(t, cache.stage_in[i], p.down[i], g.down[i].w,
                        g.down[i].b);
  }
  return t;
}

template <typename S>
Grid4<S> synthesis(const Grid4<S>& y, const SynthesisParams<S>& p,
                   SynthesisCache<S>* cache) {
  if (cache) {
    cache->head_in = y;
    cache->vrn.assign(p.up.size(), {});
    cache->up_in.clear();
  }
  Grid4<S> t = conv3d(y, p.head);
  for (std::size_t i = 0; i < p.up.size(); ++i) {
    if (cache) cache->vrn[i].resize(p.vrns[i].size());
    for (std::size_t j = 0; j < p.vrns[i].size(); ++j)
      t = vrn_block(t, p.vrns[i][j], cache ? &cache->vrn[i][j] : nullptr);
    if (cache) cache->up_in.push_back(t);
    t = deconv3d(t, p.up[i]);
  }
  return t;
}

template <typename S>
Grid4<S> synthesis_backward(const Grid4<S>& up, const SynthesisParams<S>& p,
                            const SynthesisCache<S>& cache,
                            SynthesisParams<S>& g) {
  Grid4<S> t = up;
  for (std::size_t i = p.up.size(); i-- > 0;) {
    t = deconv3d_backward(t, cache.up_in[i], p.up[i], g.up[i].w, g.up[i].b);
    for (std::size_t j = p.vrns[i].size(); j-- > 0;)
      t = vrn_block_backward(t, p.vrns[i][j], cache.vrn[i][j], g.vrns[i][j]);
  }
  return conv3d_backward(t, cache.head_in, p.head, g.head.w, g.head.b);
}

template <typename S>
Grid4<S> hyper_analysis(const Grid4<S>& y, const HyperAnalysisParams<S>& p,
                        HyperAnalysisCache<S>* cache) {
  Grid4<S> t1 = conv3d(y, p.c1);
  Grid4<S> r1 = relu(t1);
  Grid4<S> t2 = conv3d(r1, p.c2);
  Grid4<S> r2 = relu(t2);
  Grid4<S> z = conv3d(r2, p.c3);
  if (cache) {
    cache->c1_in = y;
    cache->r1_pre = std::move(t1);
    cache->c2_in = std::move(r1);
    cache->r2_pre = std::move(t2);
    cache->c3_in = std::move(r2);
  }
  return z;
}

template <typename S>
Grid4<S> hyper_analysis_backward(const Grid4<S>& up,
                                 const HyperAnalysisParams<S>& p,
                                 const HyperAnalysisCache<S>& cache,
                                 HyperAnalysisParams<S>& g) {
  Grid4<S> t = conv3d_backward(up, cache.c3_in, p.c3, g.c3.w, g.c3.b);
  t = relu_backward(t, cache.r2_pre);
  t = conv3d_backward(t, cache.c2_in, p.c2, g.c2.w, g.c2.b);
  t = relu_backward(t, cache.r1_pre);
  return conv3d_backward(t, cache.c1_in, p.c1, g.c1.w, g.c1.b);
}

template <typename S>
MuSigma<S> hyper_synthesis(const Grid4<S>& z, const HyperSynthesisParams<S>& p,
                           int y_d, int y_h, int y_w,
                           HyperSynthesisCache<S>* cache) {
  const int md = (y_d + 1) / 2, mh = (y_h + 1) / 2, mw = (y_w + 1) / 2;
  Grid4<S> t1 = deconv3d(z, p.d1, md, mh, mw);
  Grid4<S> r1 = relu(t1);
  Grid4<S> t2 = deconv3d(r1, p.d2, y_d, y_h, y_w);
  Grid4<S> r2 = relu(t2);
  Grid4<S> out = conv3d(r2, p.head);

  const int cy = out.c / 2;
  MuSigma<S> ms;
  ms.mu = detail::slice_channels(out, 0, cy);
  Grid4<S> raw = detail::slice_channels(out, cy, out.c);
  ms.sigma = raw;
  const S lo = S(std::log(kSigmaMin)), hi = S(std::log(kSigmaMax));
  ms.sigma.v = raw.v.min(hi).max(lo).exp();
  if (cache) {
    cache->d1_in = z;
    cache->r1_pre = std::move(t1);
    cache->d2_in = std::move(r1);
    cache->r2_pre = std::move(t2);
    cache->head_in = std::move(r2);
    cache->raw_sigma = std::move(raw);
    cache->y_d = y_d;
    cache->y_h = y_h;
    cache->y_w = y_w;
  }
  return ms;
}

template <typename S>
Grid4<S> hyper_synthesis_backward(const Grid4<S>& gmu, const Grid4<S>& gsigma,
                                  const HyperSynthesisParams<S>& p,
                                  const HyperSynthesisCache<S>& cache,
                                  HyperSynthesisParams<S>& g) {
  // d sigma / d raw = sigma inside the clamp, 0 outside.
  const S lo = S(std::log(kSigmaMin)), hi = S(std::log(kSigmaMax));
  Grid4<S> graw = gsigma;
  graw.v = (cache.raw_sigma.v > lo && cache.raw_sigma.v < hi)
               .select(gsigma.v * cache.raw_sigma.v.exp(),
                       ArrayX<S>::Zero(gsigma.v.size()));
  Grid4<S> up = detail::concat_channels(gmu, graw);

  Grid4<S> t = conv3d_backward(up, cache.head_in, p.head, g.head.w, g.head.b);
  t = relu_backward(t, cache.r2_pre);
  t = deconv3d_backward(t, cache.d2_in, p.d2, g.d2.w, g.d2.b);
  t = relu_backward(t, cache.r1_pre);
  return deconv3d_backward(t, cache.d1_in, p.d1, g.d1.w, g.d1.b);
}

}  // namespace pcgc
