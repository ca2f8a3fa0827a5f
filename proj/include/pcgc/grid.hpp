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

#include <Eigen/Core>
#include <cstdint>

#include "pcgc/common.hpp"

namespace pcgc {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Dense (channel, depth, height, width) grid; width is contiguous.
template <typename S>
struct Grid4 {
  int c = 0, d = 0, h = 0, w = 0;
  ArrayX<S> v;

  Grid4() = default;
  Grid4(int c_, int d_, int h_, int w_)
      : c(c_), d(d_), h(h_), w(w_), v(ArrayX<S>::Zero(Eigen::Index(c_) * d_ * h_ * w_)) {}

  static Grid4 cube(int side) { return Grid4(1, side, side, side); }

  Eigen::Index size() const { return v.size(); }
  Eigen::Index spatial() const { return Eigen::Index(d) * h * w; }

  S& at(int ci, int z, int y, int x) {
    return v[((Eigen::Index(ci) * d + z) * h + y) * w + x];
  }
  S at(int ci, int z, int y, int x) const {
    return v[((Eigen::Index(ci) * d + z) * h + y) * w + x];
  }

  S* data() { return v.data(); }
  const S* data() const { return v.data(); }

  bool same_shape(const Grid4& o) const {
    return c == o.c && d == o.d && h == o.h && w == o.w;
  }

  template <typename T>
  Grid4<T> cast() const {
    Grid4<T> out;
    out.c = c;
    out.d = d;
    out.h = h;
    out.w = w;
    out.v = v.template cast<T>();
    return out;
  }
};

}  // namespace pcgc
