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

#include <cstdint>
#include <span>
#include <vector>

#include "pcgc/geometry.hpp"

namespace pcgc {

// Breadth-first octree occupancy serialization of occupied cube positions.
// One byte per occupied internal node; bit (7 - b) is set iff child b is
// occupied, with b = (i_bit << 2) | (j_bit << 1) | k_bit.
std::vector<std::uint8_t> encode_cube_positions(const CubeIndexSet& set);

// Exact inverse. Throws ParseError on a truncated stream.
CubeIndexSet decode_cube_positions(std::span<const std::uint8_t> bytes,
                                   int grid_levels);

}  // namespace pcgc
