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

#include "pcgc/codec.hpp"
#include "pcgc/geometry.hpp"

namespace pcgc {

// Exact nearest-neighbor search over a fixed point list.
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Coord>& points);

  // Returns (index, squared distance) of the nearest stored point.
  std::pair<std::size_t, double> nearest(const std::array<double, 3>& q) const;

  // Indices of the k nearest stored points (unsorted beyond the k bound).
  std::vector<std::size_t> knearest(const std::array<double, 3>& q,
                                    std::size_t k) const;

 private:
  struct Node {
    std::int32_t left = -1, right = -1;
    std::size_t point = 0;
    int axis = 0;
  };
  std::int32_t build(std::size_t begin, std::size_t end, int depth);
  std::vector<std::array<double, 3>> pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

// Unit normal per point, PCA over 20 nearest neighbors by default; the sign
// is normalized toward nonnegative z (then y, then x).
struct NormalField {
  std::vector<std::array<double, 3>> normals;
};

NormalField estimate_normals(const PointSet& ps, int k = 20);

// Symmetric point-to-point squared error:
// max(mean_a min_b |a-b|^2, mean_b min_a |a-b|^2).
double d1_mse(const PointSet& a, const PointSet& b);

// Symmetric point-to-plane squared error against reference cloud b, whose
// normals drive both directions (the moving point has no normals of its own).
double d2_mse(const PointSet& a, const PointSet& b, const NormalField& nb);

// MPEG pc_error convention: 10*log10(3*p^2 / mse) with p = 2^precision - 1;
// returns +infinity for mse == 0.
double psnr(double mse, int precision);

struct RdPoint {
  double bpp = 0.0;
  double psnr = 0.0;
};

// Bjontegaard delta rate of curve B against curve A, in percent. Both
// curves need >= 4 points and overlapping PSNR ranges; interpolation is
// shape-preserving piecewise cubic (Fritsch-Carlson) of log10(rate) vs PSNR.
double bd_rate(std::span<const RdPoint> curve_a, std::span<const RdPoint> curve_b);

struct EvalRow {
  std::string cloud;
  Rational scale;
  double lambda = 0.0;
  double bpp = 0.0;
  double d1_psnr = 0.0;
  double d2_psnr = 0.0;
  std::uint64_t meta_bits = 0;
  std::uint64_t payload_bits = 0;
};

struct NamedCloud {
  std::string name;
  PointSet cloud;
};

struct RatedModel {
  const Model<float>* model = nullptr;
  double lambda = 0.0;
};

// Full encode/decode/measure sweep: one row per (model, scale, cloud).
std::vector<EvalRow> eval_run(std::span<const RatedModel> models,
                              std::span<const NamedCloud> clouds,
                              std::span<const Rational> scales, int cube_size,
                              bool factorized_y, int threads);

std::string eval_csv(std::span<const EvalRow> rows);

}  // namespace pcgc
