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

#include <limits>

#include "pcgc/grid.hpp"

namespace pcgc {

// 3D convolution parameters. For a forward convolution the weight layout is
// [out_c][in_c][kz][ky][kx]; for a transposed convolution it is
// [in_c][out_c][kz][ky][kx]. Kernel sizes 1 and 3, strides 1 and 2; padding
// is k/2 so stride-1 convolutions preserve spatial size.
template <typename S>
struct ConvParams {
  int in_c = 0, out_c = 0, k = 3, stride = 1;
  bool transposed = false;
  ArrayX<S> w;
  ArrayX<S> b;

  static ConvParams conv(int in_c, int out_c, int k, int stride) {
    if (k != 1 && k != 3) throw ConfigError("conv3d: kernel must be 1 or 3");
    if (stride != 1 && stride != 2)
      throw ConfigError("conv3d: stride must be 1 or 2");
    ConvParams p;
    p.in_c = in_c;
    p.out_c = out_c;
    p.k = k;
    p.stride = stride;
    p.w = ArrayX<S>::Zero(Eigen::Index(out_c) * in_c * k * k * k);
    p.b = ArrayX<S>::Zero(out_c);
    return p;
  }

  static ConvParams deconv(int in_c, int out_c) {
    ConvParams p = conv(in_c, out_c, 3, 2);
    p.transposed = true;
    return p;
  }
};

namespace detail {

inline int conv_out_size(int in, int stride) {
  return (in + stride - 1) / stride;  // ceil(in / stride)
}

// Loop bounds such that x0*stride + off lies in [0, in_size) for
// x0 in [lo, hi]; hi may end up below lo (empty range).
inline void tap_bounds(int off, int stride, int in_size, int out_size, int& lo,
                       int& hi) {
  lo = 0;
  hi = out_size - 1;
  if (off < 0) lo = (stride == 1) ? -off : (-off + 1) / 2;
  if (off > 0) hi = (in_size - 1 - off) >= 0 ? (in_size - 1 - off) / stride : -1;
}

}  // namespace detail

// Cross-correlation: out[co][z][y][x] = b[co] +
//   sum_{ci,kz,ky,kx} w[co][ci][kz][ky][kx] * in[ci][z*s+kz-p][...],
// zero outside the input. Output spatial size is ceil(in/stride).
template <typename S>
Grid4<S> conv3d(const Grid4<S>& x, const ConvParams<S>& p) {
  if (p.transposed) throw ConfigError("conv3d: got transposed parameters");
  if (x.c != p.in_c) throw ConfigError("conv3d: channel mismatch");
  const int k = p.k, s = p.stride, pad = p.k / 2;
  const int od = detail::conv_out_size(x.d, s);
  const int oh = detail::conv_out_size(x.h, s);
  const int ow = detail::conv_out_size(x.w, s);
  Grid4<S> out(p.out_c, od, oh, ow);

  const S* xd = x.data();
  S* od_p = out.data();
  for (int co = 0; co < p.out_c; ++co) {
    for (int z = 0; z < od; ++z)
      for (int y = 0; y < oh; ++y) {
        S* orow = od_p + ((Eigen::Index(co) * od + z) * oh + y) * ow;
        for (int x0 = 0; x0 < ow; ++x0) orow[x0] = p.b[co];
        for (int ci = 0; ci < p.in_c; ++ci)
          for (int kz = 0; kz < k; ++kz) {
            const int iz = z * s + kz - pad;
            if (iz < 0 || iz >= x.d) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = y * s + ky - pad;
              if (iy < 0 || iy >= x.h) continue;
              const S* irow = xd + ((Eigen::Index(ci) * x.d + iz) * x.h + iy) * x.w;
              const S* wrow =
                  p.w.data() +
                  (((Eigen::Index(co) * p.in_c + ci) * k + kz) * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const S wv = wrow[kx];
                const int off = kx - pad;
                int lo, hi;
                detail::tap_bounds(off, s, x.w, ow, lo, hi);
                for (int x0 = lo; x0 <= hi; ++x0)
                  orow[x0] += wv * irow[x0 * s + off];
              }
            }
          }
      }
  }
  return out;
}

// Gradients of conv3d. Accumulates (+=) into gw/gb and returns the input
// gradient.
template <typename S>
Grid4<S> conv3d_backward(const Grid4<S>& up, const Grid4<S>& x,
                         const ConvParams<S>& p, ArrayX<S>& gw, ArrayX<S>& gb) {
  if (p.transposed) throw ConfigError("conv3d_backward: transposed params");
  if (x.c != p.in_c || up.c != p.out_c)
    throw ConfigError("conv3d_backward: channel mismatch");
  const int k = p.k, s = p.stride, pad = p.k / 2;
  if (up.d != detail::conv_out_size(x.d, s) ||
      up.h != detail::conv_out_size(x.h, s) ||
      up.w != detail::conv_out_size(x.w, s))
    throw ConfigError("conv3d_backward: upstream shape mismatch");

  Grid4<S> gx(x.c, x.d, x.h, x.w);
  const S* ud = up.data();
  const S* xd = x.data();
  S* gxd = gx.data();
  for (int co = 0; co < p.out_c; ++co) {
    for (int z = 0; z < up.d; ++z)
      for (int y = 0; y < up.h; ++y) {
        const S* urow = ud + ((Eigen::Index(co) * up.d + z) * up.h + y) * up.w;
        for (int x0 = 0; x0 < up.w; ++x0) gb[co] += urow[x0];
        for (int ci = 0; ci < p.in_c; ++ci)
          for (int kz = 0; kz < k; ++kz) {
            const int iz = z * s + kz - pad;
            if (iz < 0 || iz >= x.d) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = y * s + ky - pad;
              if (iy < 0 || iy >= x.h) continue;
              const Eigen::Index row_off =
                  ((Eigen::Index(ci) * x.d + iz) * x.h + iy) * x.w;
              const S* irow = xd + row_off;
              S* grow = gxd + row_off;
              const Eigen::Index wbase =
                  (((Eigen::Index(co) * p.in_c + ci) * k + kz) * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const int off = kx - pad;
                int lo, hi;
                detail::tap_bounds(off, s, x.w, up.w, lo, hi);
                S wgrad = 0;
                const S wv = p.w[wbase + kx];
                for (int x0 = lo; x0 <= hi; ++x0) {
                  wgrad += urow[x0] * irow[x0 * s + off];
                  grow[x0 * s + off] += wv * urow[x0];
                }
                gw[wbase + kx] += wgrad;
              }
            }
          }
      }
  }
  return gx;
}

// Transposed convolution (kernel 3, stride 2): the exact adjoint of conv3d
// with the same kernel taps. out_d/h/w default to twice the input size;
// passing 2*in-1 inverts a ceil-divided odd size.
template <typename S>
Grid4<S> deconv3d(const Grid4<S>& x, const ConvParams<S>& p, int out_d = -1,
                  int out_h = -1, int out_w = -1) {
  if (!p.transposed) throw ConfigError("deconv3d: needs transposed params");
  if (x.c != p.in_c) throw ConfigError("deconv3d: channel mismatch");
  const int k = 3, s = 2, pad = 1;
  if (out_d < 0) out_d = 2 * x.d;
  if (out_h < 0) out_h = 2 * x.h;
  if (out_w < 0) out_w = 2 * x.w;
  if (detail::conv_out_size(out_d, s) != x.d ||
      detail::conv_out_size(out_h, s) != x.h ||
      detail::conv_out_size(out_w, s) != x.w)
    throw ConfigError("deconv3d: output size incompatible with input");

  Grid4<S> out(p.out_c, out_d, out_h, out_w);
  for (int co = 0; co < p.out_c; ++co)
    out.v.segment(Eigen::Index(co) * out.spatial(), out.spatial()) = p.b[co];

  const S* xd = x.data();
  S* od = out.data();
  for (int ci = 0; ci < p.in_c; ++ci)
    for (int co = 0; co < p.out_c; ++co)
      for (int z = 0; z < x.d; ++z)
        for (int y = 0; y < x.h; ++y) {
          const S* irow = xd + ((Eigen::Index(ci) * x.d + z) * x.h + y) * x.w;
          for (int kz = 0; kz < k; ++kz) {
            const int oz = z * s + kz - pad;
            if (oz < 0 || oz >= out_d) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int oy = y * s + ky - pad;
              if (oy < 0 || oy >= out_h) continue;
              S* orow = od + ((Eigen::Index(co) * out_d + oz) * out_h + oy) * out_w;
              const S* wrow =
                  p.w.data() +
                  (((Eigen::Index(ci) * p.out_c + co) * k + kz) * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const S wv = wrow[kx];
                const int off = kx - pad;
                int lo, hi;
                detail::tap_bounds(off, s, out_w, x.w, lo, hi);
                for (int x0 = lo; x0 <= hi; ++x0)
                  orow[x0 * s + off] += wv * irow[x0];
              }
            }
          }
        }
  return out;
}

template <typename S>
Grid4<S> deconv3d_backward(const Grid4<S>& up, const Grid4<S>& x,
                           const ConvParams<S>& p, ArrayX<S>& gw,
                           ArrayX<S>& gb) {
  if (!p.transposed) throw ConfigError("deconv3d_backward: needs transposed");
  if (x.c != p.in_c || up.c != p.out_c)
    throw ConfigError("deconv3d_backward: channel mismatch");
  const int k = 3, s = 2, pad = 1;
  if (detail::conv_out_size(up.d, s) != x.d ||
      detail::conv_out_size(up.h, s) != x.h ||
      detail::conv_out_size(up.w, s) != x.w)
    throw ConfigError("deconv3d_backward: upstream shape mismatch");

  for (int co = 0; co < p.out_c; ++co)
    gb[co] += up.v.segment(Eigen::Index(co) * up.spatial(), up.spatial()).sum();

  Grid4<S> gx(x.c, x.d, x.h, x.w);
  const S* ud = up.data();
  const S* xd = x.data();
  S* gxd = gx.data();
  for (int ci = 0; ci < p.in_c; ++ci)
    for (int co = 0; co < p.out_c; ++co)
      for (int z = 0; z < x.d; ++z)
        for (int y = 0; y < x.h; ++y) {
          const S* irow = xd + ((Eigen::Index(ci) * x.d + z) * x.h + y) * x.w;
          S* grow = gxd + ((Eigen::Index(ci) * x.d + z) * x.h + y) * x.w;
          for (int kz = 0; kz < k; ++kz) {
            const int oz = z * s + kz - pad;
            if (oz < 0 || oz >= up.d) continue;
            for (int ky = 0; ky < k; ++ky) {
              const int oy = y * s + ky - pad;
              if (oy < 0 || oy >= up.h) continue;
              const S* urow =
                  ud + ((Eigen::Index(co) * up.d + oz) * up.h + oy) * up.w;
              const Eigen::Index wbase =
                  (((Eigen::Index(ci) * p.out_c + co) * k + kz) * k + ky) * k;
              for (int kx = 0; kx < k; ++kx) {
                const int off = kx - pad;
                int lo, hi;
                detail::tap_bounds(off, s, up.w, x.w, lo, hi);
                S wgrad = 0;
                const S wv = p.w[wbase + kx];
                for (int x0 = lo; x0 <= hi; ++x0) {
                  wgrad += urow[x0 * s + off] * irow[x0];
                  grow[x0] += wv * urow[x0 * s + off];
                }
                gw[wbase + kx] += wgrad;
              }
            }
          }
        }
  return gx;
}

template <typename S>
Grid4<S> relu(const Grid4<S>& x) {
  Grid4<S> out = x;
  out.v = x.v.max(S(0));
  return out;
}

// Subgradient at 0 is 0.
template <typename S>
Grid4<S> relu_backward(const Grid4<S>& up, const Grid4<S>& x) {
  Grid4<S> out = up;
  out.v = (x.v > S(0)).select(up.v, ArrayX<S>::Zero(up.v.size()));
  return out;
}

// Logistic function clamped into the open interval (0, 1).
template <typename S>
Grid4<S> sigmoid(const Grid4<S>& x) {
  const S eps = std::numeric_limits<S>::epsilon();
  Grid4<S> out = x;
  out.v = (S(1) / (S(1) + (-x.v).exp())).min(S(1) - eps).max(eps);
  return out;
}

// Takes the forward *output* y = sigmoid(x).
template <typename S>
Grid4<S> sigmoid_backward(const Grid4<S>& up, const Grid4<S>& y) {
  Grid4<S> out = up;
  out.v = up.v * y.v * (S(1) - y.v);
  return out;
}

// He-uniform fill: w ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), b = 0.
template <typename S>
void he_uniform_init(ConvParams<S>& p, Rng& rng) {
  const double fan_in = double(p.in_c) * p.k * p.k * p.k;
  const double limit = std::sqrt(6.0 / fan_in);
  for (Eigen::Index i = 0; i < p.w.size(); ++i)
    p.w[i] = S(rng.uniform(-limit, limit));
  p.b.setZero();
}

// One Adam update on a single parameter array. `t` is the 1-based step
// count used for bias correction. Throws on non-finite gradients.
template <typename S>
void adam_step(ArrayX<S>& param, const ArrayX<S>& grad, ArrayX<S>& m,
               ArrayX<S>& v, long t, S lr, S beta1, S beta2, S eps) {
  if (!grad.isFinite().all())
    throw Error("adam_step: non-finite gradient");
  m = beta1 * m + (S(1) - beta1) * grad;
  v = beta2 * v + (S(1) - beta2) * grad.square();
  const S c1 = S(1) - std::pow(beta1, S(t));
  const S c2 = S(1) - std::pow(beta2, S(t));
  param -= lr * (m / c1) / ((v / c2).sqrt() + eps);
}

}  // namespace pcgc
