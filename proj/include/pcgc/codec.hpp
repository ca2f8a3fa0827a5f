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

#include <optional>
#include <string>

#include "pcgc/entropy.hpp"
#include "pcgc/geometry.hpp"
#include "pcgc/range_coder.hpp"
#include "pcgc/transforms.hpp"

namespace pcgc {

inline constexpr char kBitstreamMagic[4] = {'P', 'C', 'G', 'C'};
inline constexpr std::uint8_t kBitstreamVersion = 1;

// Per-cube compressed payload. In hyperprior mode the latents are coded
// conditionally on the decoded hyperprior; in factorized mode the cube
// instead ships per-channel Laplace parameters for its latents.
struct CubePayload {
  std::uint32_t k = 0;
  std::int16_t y_lo = 0, y_hi = 0;
  std::int16_t z_lo = 0, z_hi = 0;
  CodedStream z_stream;
  CodedStream y_stream;
  // factorized mode: per latent channel (location in 1/256 units, scale index)
  std::vector<std::pair<std::int16_t, std::uint8_t>> y_factors;
};

enum class DistMetric { kD1, kD2 };

struct EncodeOptions {
  Rational scale;
  int cube_size = 16;
  bool factorized_y = false;
  int threads = 1;
  std::optional<DistMetric> rho_metric;  // enables encoder-side k fine-tuning
  std::optional<int> precision;          // overrides the inferred bit depth
};

struct BitstreamStats {
  std::uint64_t total_bits = 0;
  std::uint64_t header_bits = 0;
  std::uint64_t octree_bits = 0;
  std::uint64_t k_bits = 0;
  std::uint64_t payload_bits = 0;
  std::uint64_t point_count = 0;
  std::uint64_t metadata_bits() const {
    return header_bits + octree_bits + k_bits;
  }
  double bpp() const {
    return point_count ? double(total_bits) / double(point_count) : 0.0;
  }
};

// Optional taps for tests and the inspection tool.
struct CubeCodingDebug {
  std::vector<std::int32_t> yhat, zhat;
  double y_estimate_bits = 0.0;  // from quantized CDF masses
  double z_estimate_bits = 0.0;
  std::uint64_t payload_bits = 0;
};

CubePayload encode_cube(const Cube& cube, const Model<float>& model,
                        bool factorized_y = false,
                        CubeCodingDebug* debug = nullptr);

Cube decode_cube(const CubePayload& payload, const Model<float>& model, int w,
                 bool factorized_y = false, CubeCodingDebug* debug = nullptr);

// Exactly k voxels set, chosen by descending probability with ties broken
// by ascending linearized index.
std::vector<std::uint8_t> classify_topk(std::span<const float> p,
                                        std::uint32_t k);

// Fixed threshold: occupied iff p > threshold (strict).
std::vector<std::uint8_t> classify_fixed(std::span<const float> p,
                                         float threshold = 0.5f);

struct RhoResult {
  double rho = 1.0;
  std::uint32_t k_f = 0;
};

// Grid search of the占 count multiplier rho over {0.55, 0.60, ..., 1.95},
// minimizing the chosen metric against the original cube; ties prefer rho
// closest to 1.
RhoResult tune_rho(const Cube& original, std::span<const float> p,
                   DistMetric metric);

// Fixed-width num_occupied_voxel field: 3*log2(w) bits storing k-1.
class BitWriter {
 public:
  void put(std::uint64_t value, int bits);
  std::vector<std::uint8_t> finish();

 private:
  std::vector<std::uint8_t> bytes_;
  int bit_pos_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint64_t get(int bits);

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t byte_pos_ = 0;
  int bit_pos_ = 0;
};

int k_field_bits(int w);
void write_k(BitWriter& bw, std::uint32_t k, int w);
std::uint32_t read_k(BitReader& br, int w);

std::vector<std::uint8_t> encode_pointcloud(const PointSet& input,
                                            const Model<float>& model,
                                            const EncodeOptions& options,
                                            BitstreamStats* stats = nullptr);

PointSet decode_pointcloud(std::span<const std::uint8_t> bitstream,
                           const Model<float>& model, int threads = 1);

// Header + per-cube accounting without needing the model.
struct BitstreamInfo {
  std::uint8_t version = 0;
  bool factorized_y = false;
  int precision = 0;
  Rational scale;
  int cube_size = 0;
  NetConfig net;
  int grid_levels = 0;
  std::uint32_t cube_count = 0;
  std::uint64_t point_count = 0;
  BitstreamStats stats;
  struct CubeLine {
    Coord grid_pos;
    std::uint32_t k;
    std::uint32_t z_bytes, y_bytes;
    std::uint32_t escapes;
  };
  std::vector<CubeLine> cubes;
};

BitstreamInfo inspect_bitstream(std::span<const std::uint8_t> bitstream);
std::string format_info(const BitstreamInfo& info);

}  // namespace pcgc
