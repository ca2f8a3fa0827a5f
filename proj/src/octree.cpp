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

#include "pcgc/octree.hpp"

#include <algorithm>
#include <deque>

namespace pcgc {

std::vector<std::uint8_t> encode_cube_positions(const CubeIndexSet& set) {
  const int levels = set.grid_levels;
  if (levels < 1) throw ConfigError("octree: grid_levels must be >= 1");

  std::vector<std::uint64_t> codes;
  codes.reserve(set.indices.size());
  for (const Coord& c : set.indices) {
    for (int a = 0; a < 3; ++a)
      if (c[a] < 0 || c[a] >= (std::int64_t(1) << levels))
        throw ConfigError("octree: cube index out of grid range");
    codes.push_back(morton3(std::uint32_t(c[0]), std::uint32_t(c[1]),
                            std::uint32_t(c[2])));
  }
  std::sort(codes.begin(), codes.end());
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
  if (codes.empty()) throw ConfigError("octree: empty cube index set");

  // BFS over [begin, end) ranges of the Morton-sorted codes. A node at
  // depth d groups codes sharing the top 3*d Morton bits; its children are
  // the eight sub-ranges keyed by the next 3-bit group.
  struct Node {
    std::size_t begin, end;
    int depth;
  };
  std::vector<std::uint8_t> out;
  std::deque<Node> queue{{0, codes.size(), 0}};
  while (!queue.empty()) {
    const Node n = queue.front();
    queue.pop_front();
    const int shift = 3 * (levels - n.depth - 1);
    std::uint8_t byte = 0;
    std::size_t pos = n.begin;
    for (int child = 0; child < 8; ++child) {
      std::size_t child_end = pos;
      while (child_end < n.end &&
             ((codes[child_end] >> shift) & 7) == std::uint64_t(child))
        ++child_end;
      if (child_end > pos) {
        byte |= std::uint8_t(1u << (7 - child));
        if (n.depth + 1 < levels)
          queue.push_back({pos, child_end, n.depth + 1});
      }
      pos = child_end;
    }
    out.push_back(byte);
  }
  return out;
}

CubeIndexSet decode_cube_positions(std::span<const std::uint8_t> bytes,
                                   int grid_levels) {
  if (grid_levels < 1) throw ConfigError("octree: grid_levels must be >= 1");

  struct Node {
    std::uint64_t prefix;
    int depth;
  };
  std::deque<Node> queue{{0, 0}};
  std::vector<std::uint64_t> codes;
  std::size_t pos = 0;
  while (!queue.empty()) {
    const Node n = queue.front();
    queue.pop_front();
    if (pos >= bytes.size())
      throw ParseError("octree: truncated position stream");
    const std::uint8_t byte = bytes[pos++];
    if (byte == 0) throw ParseError("octree: empty occupancy byte");
    for (int child = 0; child < 8; ++child) {
      if (!(byte & (1u << (7 - child)))) continue;
      const std::uint64_t prefix = (n.prefix << 3) | std::uint64_t(child);
      if (n.depth + 1 == grid_levels)
        codes.push_back(prefix);
      else
        queue.push_back({prefix, n.depth + 1});
    }
  }
  if (pos != bytes.size())
    throw ParseError("octree: trailing bytes in position stream");

  CubeIndexSet set;
  set.grid_levels = grid_levels;
  std::sort(codes.begin(), codes.end());
  set.indices.reserve(codes.size());
  for (std::uint64_t code : codes) set.indices.push_back(morton3_inverse(code));
  return set;
}

}  // namespace pcgc
