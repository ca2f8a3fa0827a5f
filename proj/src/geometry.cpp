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

#include "pcgc/geometry.hpp"

#include <algorithm>
#include <unordered_map>

namespace pcgc {

namespace {

std::uint64_t spread3(std::uint32_t x) {
  std::uint64_t v = x & 0x1fffff;  // 21 bits per axis is plenty here
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

std::uint32_t compact3(std::uint64_t v) {
  v &= 0x1249249249249249ULL;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
  v = (v ^ (v >> 32)) & 0x1fffff;
  return std::uint32_t(v);
}

}  // namespace

std::uint64_t morton3(std::uint32_t i, std::uint32_t j, std::uint32_t k) {
  return (spread3(i) << 2) | (spread3(j) << 1) | spread3(k);
}

Coord morton3_inverse(std::uint64_t code) {
  return {std::int32_t(compact3(code >> 2)), std::int32_t(compact3(code >> 1)),
          std::int32_t(compact3(code))};
}

int bits_for_max_coord(std::int32_t max_coord) {
  int bits = 1;
  while ((std::int64_t(1) << bits) - 1 < max_coord) ++bits;
  return bits;
}

bool same_point_set(const PointSet& a, const PointSet& b) {
  std::vector<Coord> pa = a.points;
  std::vector<Coord> pb = b.points;
  std::sort(pa.begin(), pa.end());
  pa.erase(std::unique(pa.begin(), pa.end()), pa.end());
  std::sort(pb.begin(), pb.end());
  pb.erase(std::unique(pb.begin(), pb.end()), pb.end());
  return pa == pb;
}

VoxelSet voxelize(const PointSet& ps) {
  const std::int64_t hi = (std::int64_t(1) << ps.precision) - 1;
  VoxelSet vs;
  vs.precision = ps.precision;
  vs.occupied = ps.points;
  for (const Coord& c : vs.occupied) {
    for (int a = 0; a < 3; ++a) {
      if (c[a] < 0 || c[a] > hi) {
        throw ConfigError("voxelize: coordinate " + std::to_string(c[a]) +
                          " out of range for precision " +
                          std::to_string(ps.precision));
      }
    }
  }
  std::sort(vs.occupied.begin(), vs.occupied.end());
  vs.occupied.erase(std::unique(vs.occupied.begin(), vs.occupied.end()),
                    vs.occupied.end());
  return vs;
}

PointSet extract(const VoxelSet& vs) {
  return PointSet{vs.occupied, vs.precision};
}

VoxelSet scale_points(const VoxelSet& vs, const Rational& s) {
  if (s.is_one()) return vs;
  VoxelSet out;
  out.precision = vs.precision;
  out.occupied.reserve(vs.occupied.size());
  for (const Coord& c : vs.occupied) {
    out.occupied.push_back(
        {std::int32_t(mul_div_round(c[0], s.num, s.den)),
         std::int32_t(mul_div_round(c[1], s.num, s.den)),
         std::int32_t(mul_div_round(c[2], s.num, s.den))});
  }
  std::sort(out.occupied.begin(), out.occupied.end());
  out.occupied.erase(std::unique(out.occupied.begin(), out.occupied.end()),
                     out.occupied.end());
  return out;
}

PointSet inverse_scale(const VoxelSet& vs, const Rational& s) {
  PointSet out;
  std::int32_t max_coord = 0;
  out.points.reserve(vs.occupied.size());
  for (const Coord& c : vs.occupied) {
    Coord p{std::int32_t(mul_div_round(c[0], s.den, s.num)),
            std::int32_t(mul_div_round(c[1], s.den, s.num)),
            std::int32_t(mul_div_round(c[2], s.den, s.num))};
    max_coord = std::max({max_coord, p[0], p[1], p[2]});
    out.points.push_back(p);
  }
  // Rounding at the far boundary can exceed the source precision by one
  // step, so recompute instead of trusting vs.precision.
  out.precision = std::max(vs.precision, bits_for_max_coord(max_coord));
  return out;
}

std::pair<CubeIndexSet, std::vector<Cube>> partition(const VoxelSet& vs,
                                                     int w) {
  if (w < 2 || (w & (w - 1)) != 0)
    throw ConfigError("partition: cube size must be a power of two >= 2");

  std::unordered_map<std::uint64_t, std::vector<Coord>> by_cube;
  std::int32_t max_idx = 0;
  for (const Coord& c : vs.occupied) {
    const Coord idx{c[0] / w, c[1] / w, c[2] / w};
    max_idx = std::max({max_idx, idx[0], idx[1], idx[2]});
    by_cube[morton3(idx[0], idx[1], idx[2])].push_back(
        {c[0] - idx[0] * w, c[1] - idx[1] * w, c[2] - idx[2] * w});
  }

  std::vector<std::uint64_t> codes;
  codes.reserve(by_cube.size());
  for (const auto& [code, pts] : by_cube) codes.push_back(code);
  std::sort(codes.begin(), codes.end());

  CubeIndexSet set;
  set.grid_levels = std::max(1, bits_for_max_coord(max_idx));
  std::vector<Cube> cubes;
  cubes.reserve(codes.size());
  for (std::uint64_t code : codes) {
    Cube cube;
    cube.grid_pos = morton3_inverse(code);
    cube.w = w;
    cube.occupancy.assign(std::size_t(w) * w * w, 0);
    const auto& pts = by_cube[code];
    for (const Coord& p : pts)
      cube.occupancy[(std::size_t(p[0]) * w + p[1]) * w + p[2]] = 1;
    cube.k_occupied = std::uint32_t(pts.size());
    set.indices.push_back(cube.grid_pos);
    cubes.push_back(std::move(cube));
  }
  return {std::move(set), std::move(cubes)};
}

VoxelSet assemble(const CubeIndexSet& set, const std::vector<Cube>& cubes,
                  int w) {
  VoxelSet out;
  std::vector<Coord> seen;
  for (const Cube& cube : cubes) {
    if (cube.w != w) throw ConfigError("assemble: cube size mismatch");
    seen.push_back(cube.grid_pos);
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw ConfigError("assemble: duplicate cube index");
  if (cubes.size() != set.indices.size())
    throw ConfigError("assemble: cube count does not match index set");

  for (const Cube& cube : cubes) {
    const Coord base{cube.grid_pos[0] * w, cube.grid_pos[1] * w,
                     cube.grid_pos[2] * w};
    for (int i = 0; i < w; ++i)
      for (int j = 0; j < w; ++j)
        for (int k = 0; k < w; ++k)
          if (cube.occupancy[(std::size_t(i) * w + j) * w + k])
            out.occupied.push_back({base[0] + i, base[1] + j, base[2] + k});
  }
  std::sort(out.occupied.begin(), out.occupied.end());
  std::int32_t max_coord = 1;
  for (const Coord& c : out.occupied)
    max_coord = std::max({max_coord, c[0], c[1], c[2]});
  out.precision = bits_for_max_coord(max_coord);
  return out;
}

}  // namespace pcgc
