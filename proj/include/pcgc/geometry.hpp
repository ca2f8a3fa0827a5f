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

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "pcgc/common.hpp"

namespace pcgc {

using Coord = std::array<std::int32_t, 3>;

// Point list in voxel units. May contain duplicates; equality is as a set.
struct PointSet {
  std::vector<Coord> points;
  int precision = 1;  // bits per axis, coordinates in [0, 2^precision)
};

// Deduplicated occupancy set. `occupied` is kept sorted lexicographically.
struct VoxelSet {
  std::vector<Coord> occupied;
  int precision = 1;
};

// One W*W*W partition unit. `occupancy` is a flat binary grid indexed
// (i*W + j)*W + k with (i, j, k) local coordinates in [0, W).
struct Cube {
  Coord grid_pos{0, 0, 0};
  int w = 0;
  std::vector<std::uint8_t> occupancy;
  std::uint32_t k_occupied = 0;
};

// Occupied cube grid positions, sorted by Morton code; the cube grid spans
// 2^grid_levels cells per axis.
struct CubeIndexSet {
  std::vector<Coord> indices;
  int grid_levels = 1;
};

// Morton code with the i axis in the most significant bit of each 3-bit
// group. Cube payload order and octree child order both derive from this.
std::uint64_t morton3(std::uint32_t i, std::uint32_t j, std::uint32_t k);
Coord morton3_inverse(std::uint64_t code);

int bits_for_max_coord(std::int32_t max_coord);

bool same_point_set(const PointSet& a, const PointSet& b);

VoxelSet voxelize(const PointSet& ps);
PointSet extract(const VoxelSet& vs);

// Multiplies every coordinate by s and rounds half away from zero;
// duplicates created by the rounding are removed.
VoxelSet scale_points(const VoxelSet& vs, const Rational& s);

// Mirror of scale_points with factor 1/s.
PointSet inverse_scale(const VoxelSet& vs, const Rational& s);

// Splits the voxel set into non-overlapping W-cubes with local coordinates.
// Empty cubes are omitted; the result is in ascending Morton order of
// grid_pos. W must be a power of two >= 2.
std::pair<CubeIndexSet, std::vector<Cube>> partition(const VoxelSet& vs, int w);

// Exact inverse of partition. Throws on duplicate cube indices.
VoxelSet assemble(const CubeIndexSet& set, const std::vector<Cube>& cubes,
                  int w);

}  // namespace pcgc
