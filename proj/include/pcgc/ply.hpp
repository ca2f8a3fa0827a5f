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

#include "pcgc/geometry.hpp"

namespace pcgc {

// ASCII PLY only. Vertices need x, y, z properties (float or integer);
// everything else is parsed past and dropped. Float coordinates are rounded
// half away from zero. Errors carry the offending 1-based line number.
PointSet parse_ply(const std::string& text);

// ASCII PLY with integer x y z properties and LF line endings.
std::string write_ply(const PointSet& ps);

PointSet read_ply_file(const std::string& path);
void write_ply_file(const std::string& path, const PointSet& ps);

}  // namespace pcgc
