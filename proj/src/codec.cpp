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

#include "pcgc/codec.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "pcgc/metrics.hpp"
#include "pcgc/octree.hpp"
#include "pcgc/threading.hpp"

namespace pcgc {

namespace {

// ---- byte-level helpers --------------------------------------------------

struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  template <typename T>
  void put(T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes.insert(bytes.end(), buf, buf + sizeof(T));
  }
  void put_bytes(std::span<const std::uint8_t> b) {
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
};

struct ByteReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > bytes.size())
      throw ParseError("bitstream: truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    if (pos + n > bytes.size()) throw ParseError("bitstream: truncated");
    auto out = bytes.subspan(pos, n);
    pos += n;
    return out;
  }
};

Grid4<float> cube_to_grid(const Cube& cube) {
  Grid4<float> g = Grid4<float>::cube(cube.w);
  for (Eigen::Index i = 0; i < g.v.size(); ++i)
    g.v[i] = float(cube.occupancy[std::size_t(i)]);
  return g;
}

void check_finite(const Grid4<float>& g, const char* where) {
  if (!g.v.isFinite().all())
    throw Error(std::string("codec: non-finite activations in ") + where);
}

// Table symbol range: [min-1, max+1] so the boundary escape bins never
// collide with real symbols; clamped to the signed 16-bit header fields and
// to a sane width (escapes cover anything outside).
std::pair<std::int16_t, std::int16_t> symbol_range(
    std::span<const std::int32_t> symbols) {
  std::int32_t lo = symbols[0], hi = symbols[0];
  for (std::int32_t s : symbols) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  lo -= 1;
  hi += 1;
  constexpr std::int32_t kMaxWidth = 4096;
  if (hi - lo + 1 > kMaxWidth) {
    const std::int32_t mid = std::int32_t((std::int64_t(lo) + hi) / 2);
    lo = mid - kMaxWidth / 2;
    hi = lo + kMaxWidth - 1;
  }
  lo = std::clamp(lo, -32768, 32767);
  hi = std::clamp(hi, -32768, 32767);
  return {std::int16_t(lo), std::int16_t(hi)};
}

// Shared (mu, sigma) -> table cache; cubes reuse tables heavily.
class TableCache {
 public:
  TableCache(std::int32_t lo, std::int32_t hi) : lo_(lo), hi_(hi) {}

  const CdfTable& get(double mu, double sigma) {
    const std::int64_t mu_key = std::llround(mu * 256.0);
    const int s_idx = sigma_index(sigma);
    const std::int64_t key = (mu_key << 8) | std::int64_t(s_idx);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_
               .emplace(key, build_cdf_table(double(mu_key) / 256.0,
                                             sigma_from_index(s_idx), lo_, hi_))
               .first;
    }
    return it->second;
  }

 private:
  std::int32_t lo_, hi_;
  std::unordered_map<std::int64_t, CdfTable> cache_;
};

std::vector<const CdfTable*> conditional_tables(const Grid4<float>& mu,
                                                const Grid4<float>& sigma,
                                                TableCache& cache) {
  std::vector<const CdfTable*> tables(std::size_t(mu.v.size()));
  for (Eigen::Index i = 0; i < mu.v.size(); ++i)
    tables[std::size_t(i)] = &cache.get(double(mu.v[i]), double(sigma.v[i]));
  return tables;
}

double stream_estimate_bits(std::span<const std::int32_t> symbols,
                            std::span<const CdfTable* const> tables) {
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const CdfTable& t = *tables[i];
    std::int32_t s = std::clamp(symbols[i], t.lo, t.hi);
    bits += table_bits(t, s);
    if (symbols[i] <= t.lo || symbols[i] >= t.hi) bits += 32.0;  // raw escape
  }
  return bits;
}

std::uint64_t stream_payload_bits(const CodedStream& s) {
  return 8 * std::uint64_t(s.bytes.size()) + 32 * std::uint64_t(s.escapes.size());
}

// Factorized per-channel fit for hyperprior-off coding of the latents:
// quantized Laplace MLE (location = quantized mean, scale = mean absolute
// deviation snapped to the sigma grid).
std::vector<std::pair<std::int16_t, std::uint8_t>> fit_channel_factors(
    const Grid4<float>& yhat) {
  std::vector<std::pair<std::int16_t, std::uint8_t>> factors;
  const Eigen::Index sp = yhat.spatial();
  for (int c = 0; c < yhat.c; ++c) {
    const auto seg = yhat.v.segment(Eigen::Index(c) * sp, sp);
    const double mean = seg.template cast<double>().mean();
    const std::int64_t m_fixed =
        std::clamp<std::int64_t>(std::llround(mean * 256.0), -32768, 32767);
    const double m_q = double(m_fixed) / 256.0;
    const double mad =
        (seg.template cast<double>() - m_q).abs().mean();
    factors.emplace_back(std::int16_t(m_fixed),
                         std::uint8_t(sigma_index(std::max(mad, kSigmaMin))));
  }
  return factors;
}

std::vector<const CdfTable*> factor_tables(
    std::span<const std::pair<std::int16_t, std::uint8_t>> factors,
    Eigen::Index spatial, std::vector<CdfTable>& storage, std::int32_t lo,
    std::int32_t hi) {
  storage.clear();
  storage.reserve(factors.size());
  for (const auto& [m_fixed, s_idx] : factors)
    storage.push_back(build_cdf_table(double(m_fixed) / 256.0,
                                      sigma_from_index(s_idx), lo, hi));
  std::vector<const CdfTable*> tables;
  tables.reserve(std::size_t(spatial) * factors.size());
  for (std::size_t c = 0; c < factors.size(); ++c)
    for (Eigen::Index i = 0; i < spatial; ++i) tables.push_back(&storage[c]);
  return tables;
}

std::vector<const CdfTable*> psi_tables(const Model<float>& model,
                                        Eigen::Index spatial,
                                        std::vector<CdfTable>& storage,
                                        std::int32_t lo, std::int32_t hi) {
  storage.clear();
  const int cz = model.cfg.hyper_channels;
  storage.reserve(std::size_t(cz));
  for (int c = 0; c < cz; ++c) {
    const double m_q = quantize_mu(double(model.psi.m[c]));
    const double b = clamped_exp_scale(double(model.psi.raw_b[c]));
    storage.push_back(
        build_cdf_table(m_q, sigma_from_index(sigma_index(b)), lo, hi));
  }
  std::vector<const CdfTable*> tables;
  tables.reserve(std::size_t(spatial) * std::size_t(cz));
  for (int c = 0; c < cz; ++c)
    for (Eigen::Index i = 0; i < spatial; ++i) tables.push_back(&storage[std::size_t(c)]);
  return tables;
}

Grid4<float> symbols_to_grid(std::span<const std::int32_t> symbols, int c,
                             int side) {
  Grid4<float> g(c, side, side, side);
  if (Eigen::Index(symbols.size()) != g.v.size())
    throw ParseError("bitstream: symbol count mismatch");
  for (Eigen::Index i = 0; i < g.v.size(); ++i)
    g.v[i] = float(symbols[std::size_t(i)]);
  return g;
}

}  // namespace

// ---- classification ------------------------------------------------------

std::vector<std::uint8_t> classify_topk(std::span<const float> p,
                                        std::uint32_t k) {
  if (k > p.size()) throw ConfigError("classify_topk: k exceeds voxel count");
  std::vector<std::uint32_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (p[a] != p[b]) return p[a] > p[b];
                      return a < b;
                    });
  std::vector<std::uint8_t> grid(p.size(), 0);
  for (std::uint32_t i = 0; i < k; ++i) grid[order[i]] = 1;
  return grid;
}

std::vector<std::uint8_t> classify_fixed(std::span<const float> p,
                                         float threshold) {
  std::vector<std::uint8_t> grid(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) grid[i] = p[i] > threshold;
  return grid;
}

// ---- num_occupied_voxel fields --------------------------------------------

void BitWriter::put(std::uint64_t value, int bits) {
  for (int b = bits - 1; b >= 0; --b) {
    if (bit_pos_ == 0) bytes_.push_back(0);
    if ((value >> b) & 1) bytes_.back() |= std::uint8_t(0x80u >> bit_pos_);
    bit_pos_ = (bit_pos_ + 1) % 8;
  }
}

std::vector<std::uint8_t> BitWriter::finish() { return std::move(bytes_); }

std::uint64_t BitReader::get(int bits) {
  std::uint64_t v = 0;
  for (int b = 0; b < bits; ++b) {
    if (byte_pos_ >= bytes_.size())
      throw ParseError("bitstream: truncated k fields");
    const int bit = (bytes_[byte_pos_] >> (7 - bit_pos_)) & 1;
    v = (v << 1) | std::uint64_t(bit);
    if (++bit_pos_ == 8) {
      bit_pos_ = 0;
      ++byte_pos_;
    }
  }
  return v;
}

int k_field_bits(int w) {
  int log2w = 0;
  while ((1 << log2w) < w) ++log2w;
  return 3 * log2w;
}

void write_k(BitWriter& bw, std::uint32_t k, int w) {
  const std::uint64_t max_k = std::uint64_t(w) * w * w;
  if (k < 1 || k > max_k) throw ConfigError("write_k: k out of range");
  bw.put(k - 1, k_field_bits(w));  // k >= 1, so k-1 fits 3*log2(w) bits
}

std::uint32_t read_k(BitReader& br, int w) {
  return std::uint32_t(br.get(k_field_bits(w))) + 1;
}

// ---- per-cube codec --------------------------------------------------------

CubePayload encode_cube(const Cube& cube, const Model<float>& model,
                        bool factorized_y, CubeCodingDebug* debug) {
  if (cube.k_occupied == 0)
    throw ConfigError("encode_cube: cube has no occupied voxels");
  if (!model.cfg.compatible_cube(cube.w))
    throw ConfigError("encode_cube: cube size incompatible with network");

  const Grid4<float> x = cube_to_grid(cube);
  const Grid4<float> y = analysis(x, model.analysis);
  check_finite(y, "analysis");
  const Grid4<float> yhat = quantize_round(y);
  const std::vector<std::int32_t> y_syms = to_symbols(yhat);

  CubePayload payload;
  payload.k = cube.k_occupied;
  const auto [y_lo, y_hi] = symbol_range(y_syms);
  payload.y_lo = y_lo;
  payload.y_hi = y_hi;

  if (factorized_y) {
    payload.y_factors = fit_channel_factors(yhat);
    std::vector<CdfTable> storage;
    const auto tables =
        factor_tables(payload.y_factors, yhat.spatial(), storage, y_lo, y_hi);
    payload.y_stream = encode_symbols(y_syms, tables);
    if (debug) {
      debug->yhat = y_syms;
      debug->y_estimate_bits = stream_estimate_bits(y_syms, tables);
      debug->payload_bits = stream_payload_bits(payload.y_stream);
    }
    return payload;
  }

  const Grid4<float> z = hyper_analysis(y, model.hyper_a);
  check_finite(z, "hyper analysis");
  const Grid4<float> zhat = quantize_round(z);
  const std::vector<std::int32_t> z_syms = to_symbols(zhat);
  const auto [z_lo, z_hi] = symbol_range(z_syms);
  payload.z_lo = z_lo;
  payload.z_hi = z_hi;

  std::vector<CdfTable> z_storage;
  const auto z_tables = psi_tables(model, zhat.spatial(), z_storage, z_lo, z_hi);
  payload.z_stream = encode_symbols(z_syms, z_tables);

  // The conditional model is driven by the decoded hyperprior (zhat is
  // exactly what the decoder reconstructs), keeping both ends in lockstep.
  const int ys = model.cfg.y_spatial(cube.w);
  const MuSigma<float> ms =
      hyper_synthesis(zhat, model.hyper_s, ys, ys, ys);
  check_finite(ms.mu, "hyper synthesis");
  TableCache cache(y_lo, y_hi);
  const auto y_tables = conditional_tables(ms.mu, ms.sigma, cache);
  payload.y_stream = encode_symbols(y_syms, y_tables);

  if (debug) {
    debug->yhat = y_syms;
    debug->zhat = z_syms;
    debug->y_estimate_bits = stream_estimate_bits(y_syms, y_tables);
    debug->z_estimate_bits = stream_estimate_bits(z_syms, z_tables);
    debug->payload_bits =
        stream_payload_bits(payload.y_stream) + stream_payload_bits(payload.z_stream);
  }
  return payload;
}

Cube decode_cube(const CubePayload& payload, const Model<float>& model, int w,
                 bool factorized_y, CubeCodingDebug* debug) {
  if (!model.cfg.compatible_cube(w))
    throw ConfigError("decode_cube: cube size incompatible with network");
  const int ys = model.cfg.y_spatial(w);
  const int cy = model.cfg.latent_channels;

  Grid4<float> yhat;
  if (factorized_y) {
    if (int(payload.y_factors.size()) != cy)
      throw ParseError("bitstream: factor count mismatch");
    std::vector<CdfTable> storage;
    const auto tables =
        factor_tables(payload.y_factors, Eigen::Index(ys) * ys * ys, storage,
                      payload.y_lo, payload.y_hi);
    const auto y_syms = decode_symbols(payload.y_stream, tables);
    yhat = symbols_to_grid(y_syms, cy, ys);
    if (debug) debug->yhat = y_syms;
  } else {
    const int zs = model.cfg.z_spatial(w);
    const int cz = model.cfg.hyper_channels;
    std::vector<CdfTable> z_storage;
    const auto z_tables = psi_tables(model, Eigen::Index(zs) * zs * zs,
                                     z_storage, payload.z_lo, payload.z_hi);
    const auto z_syms = decode_symbols(payload.z_stream, z_tables);
    const Grid4<float> zhat = symbols_to_grid(z_syms, cz, zs);

    const MuSigma<float> ms = hyper_synthesis(zhat, model.hyper_s, ys, ys, ys);
    TableCache cache(payload.y_lo, payload.y_hi);
    const auto y_tables = conditional_tables(ms.mu, ms.sigma, cache);
    const auto y_syms = decode_symbols(payload.y_stream, y_tables);
    yhat = symbols_to_grid(y_syms, cy, ys);
    if (debug) {
      debug->yhat = y_syms;
      debug->zhat = z_syms;
    }
  }

  const Grid4<float> logits = synthesis(yhat, model.synthesis);
  check_finite(logits, "synthesis");
  const Grid4<float> p = sigmoid(logits);

  Cube cube;
  cube.w = w;
  cube.k_occupied = payload.k;
  cube.occupancy =
      classify_topk(std::span<const float>(p.data(), std::size_t(p.v.size())),
                    payload.k);
  return cube;
}

// ---- rho fine-tuning -------------------------------------------------------

namespace {

PointSet grid_points(std::span<const std::uint8_t> grid, int w) {
  PointSet ps;
  ps.precision = bits_for_max_coord(w - 1);
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < w; ++k)
        if (grid[(std::size_t(i) * w + j) * w + k])
          ps.points.push_back({i, j, k});
  return ps;
}

}  // namespace

RhoResult tune_rho(const Cube& original, std::span<const float> p,
                   DistMetric metric) {
  if (p.size() != original.occupancy.size())
    throw ConfigError("tune_rho: probability grid size mismatch");
  const PointSet ref = grid_points(original.occupancy, original.w);
  if (ref.points.empty()) throw ConfigError("tune_rho: empty original cube");

  // D2 needs reference normals; tiny cubes fall back to point distances.
  NormalField normals;
  DistMetric effective = metric;
  if (metric == DistMetric::kD2) {
    if (ref.points.size() >= 3)
      normals = estimate_normals(ref, 20);
    else
      effective = DistMetric::kD1;
  }

  const std::uint64_t max_k = std::uint64_t(original.w) * original.w *
                              original.w;
  RhoResult best;
  double best_metric = 0.0;
  bool first = true;
  for (int j = 1; j <= 29; ++j) {
    const double rho = 0.5 + 0.05 * j;
    const std::uint32_t k_f = std::uint32_t(std::clamp<std::int64_t>(
        round_half_away(rho * original.k_occupied), 1,
        std::int64_t(max_k)));
    const auto grid = classify_topk(p, k_f);
    const PointSet rec = grid_points(grid, original.w);
    const double m = effective == DistMetric::kD1
                         ? d1_mse(rec, ref)
                         : d2_mse(rec, ref, normals);
    const bool better =
        first || m < best_metric ||
        (m == best_metric &&
         (std::abs(rho - 1.0) < std::abs(best.rho - 1.0) ||
          (std::abs(rho - 1.0) == std::abs(best.rho - 1.0) && rho < best.rho)));
    if (better) {
      best = {rho, k_f};
      best_metric = m;
      first = false;
    }
  }
  return best;
}

// ---- container -------------------------------------------------------------

namespace {

struct ParsedBitstream {
  BitstreamInfo info;
  CubeIndexSet set;
  std::vector<CubePayload> payloads;
};

void write_stream(ByteWriter& w, const CodedStream& s) {
  w.put<std::uint32_t>(std::uint32_t(s.bytes.size()));
  w.put_bytes(s.bytes);
  w.put<std::uint16_t>(std::uint16_t(s.escapes.size()));
  for (std::int32_t e : s.escapes) w.put<std::int32_t>(e);
}

CodedStream read_stream(ByteReader& r, std::uint32_t symbol_count) {
  CodedStream s;
  s.symbol_count = symbol_count;
  const auto len = r.get<std::uint32_t>();
  const auto bytes = r.get_bytes(len);
  s.bytes.assign(bytes.begin(), bytes.end());
  const auto n_esc = r.get<std::uint16_t>();
  for (std::uint16_t i = 0; i < n_esc; ++i)
    s.escapes.push_back(r.get<std::int32_t>());
  return s;
}

ParsedBitstream parse_bitstream(std::span<const std::uint8_t> data) {
  ByteReader r{data};
  const auto magic = r.get_bytes(4);
  if (std::memcmp(magic.data(), kBitstreamMagic, 4) != 0)
    throw ParseError("bitstream: bad magic");
  ParsedBitstream out;
  BitstreamInfo& info = out.info;
  info.version = r.get<std::uint8_t>();
  if (info.version != kBitstreamVersion)
    throw ParseError("bitstream: unsupported version " +
                     std::to_string(info.version));
  const auto flags = r.get<std::uint8_t>();
  info.factorized_y = (flags & 1) != 0;
  info.precision = r.get<std::uint8_t>();
  const auto num = r.get<std::uint32_t>();
  const auto den = r.get<std::uint32_t>();
  info.scale = Rational(num, den);
  info.cube_size = r.get<std::uint16_t>();
  NetConfig& cfg = info.net;
  cfg.profile_id = r.get<std::uint8_t>();
  cfg.stages = r.get<std::uint8_t>();
  cfg.vrn_per_stage = r.get<std::uint8_t>();
  cfg.base_channels.clear();
  for (int i = 0; i < cfg.stages; ++i)
    cfg.base_channels.push_back(r.get<std::uint16_t>());
  cfg.latent_channels = r.get<std::uint16_t>();
  cfg.hyper_channels = r.get<std::uint16_t>();
  cfg.validate();
  info.grid_levels = r.get<std::uint8_t>();
  info.cube_count = r.get<std::uint32_t>();
  info.point_count = r.get<std::uint64_t>();
  info.stats.header_bits = 8 * std::uint64_t(r.pos);
  info.stats.point_count = info.point_count;

  const auto octree_len = r.get<std::uint32_t>();
  const auto octree_bytes = r.get_bytes(octree_len);
  info.stats.octree_bits = 8 * (4 + std::uint64_t(octree_len));
  out.set = decode_cube_positions(octree_bytes, info.grid_levels);
  if (out.set.indices.size() != info.cube_count)
    throw ParseError("bitstream: cube count mismatch");

  const int kbits = k_field_bits(info.cube_size);
  const std::size_t k_bytes = (std::size_t(info.cube_count) * kbits + 7) / 8;
  const auto k_section = r.get_bytes(k_bytes);
  info.stats.k_bits = 8 * std::uint64_t(k_bytes);
  BitReader kr(k_section);

  const int ys = cfg.y_spatial(info.cube_size);
  const int zs = cfg.z_spatial(info.cube_size);
  const std::uint32_t ny = std::uint32_t(cfg.latent_channels) * ys * ys * ys;
  const std::uint32_t nz = std::uint32_t(cfg.hyper_channels) * zs * zs * zs;

  const std::size_t payload_start = r.pos;
  for (std::uint32_t i = 0; i < info.cube_count; ++i) {
    CubePayload p;
    p.k = read_k(kr, info.cube_size);
    p.y_lo = r.get<std::int16_t>();
    p.y_hi = r.get<std::int16_t>();
    if (info.factorized_y) {
      for (int c = 0; c < cfg.latent_channels; ++c) {
        const auto m = r.get<std::int16_t>();
        const auto s = r.get<std::uint8_t>();
        p.y_factors.emplace_back(m, s);
      }
      p.y_stream = read_stream(r, ny);
      info.cubes.push_back({out.set.indices[i], p.k, 0,
                            std::uint32_t(p.y_stream.bytes.size()),
                            std::uint32_t(p.y_stream.escapes.size())});
    } else {
      p.z_lo = r.get<std::int16_t>();
      p.z_hi = r.get<std::int16_t>();
      p.z_stream = read_stream(r, nz);
      p.y_stream = read_stream(r, ny);
      info.cubes.push_back({out.set.indices[i], p.k,
                            std::uint32_t(p.z_stream.bytes.size()),
                            std::uint32_t(p.y_stream.bytes.size()),
                            std::uint32_t(p.z_stream.escapes.size() +
                                          p.y_stream.escapes.size())});
    }
    out.payloads.push_back(std::move(p));
  }
  if (r.pos != data.size()) throw ParseError("bitstream: trailing bytes");
  info.stats.payload_bits = 8 * std::uint64_t(data.size() - payload_start);
  info.stats.total_bits = 8 * std::uint64_t(data.size());
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_pointcloud(const PointSet& input,
                                            const Model<float>& model,
                                            const EncodeOptions& options,
                                            BitstreamStats* stats) {
  const int w = options.cube_size;
  if (w < 8 || (w & (w - 1)) != 0)
    throw ConfigError("encode: cube size must be a power of two >= 8");
  if (!model.cfg.compatible_cube(w))
    throw ConfigError("encode: cube size incompatible with network config");

  PointSet ps = input;
  if (options.precision) {
    if (*options.precision < ps.precision)
      throw ConfigError("encode: requested precision below input range");
    ps.precision = *options.precision;
  }
  if (ps.precision > 16) throw ConfigError("encode: precision above 16 bits");

  const VoxelSet voxels = voxelize(ps);
  if (voxels.occupied.empty()) throw ConfigError("encode: empty point cloud");
  const VoxelSet scaled = scale_points(voxels, options.scale);
  auto [set, cubes] = partition(scaled, w);

  std::vector<CubePayload> payloads(cubes.size());
  parallel_for(cubes.size(), options.threads, [&](std::size_t i) {
    CubeCodingDebug dbg;
    CubePayload p = encode_cube(cubes[i], model, options.factorized_y, &dbg);
    if (options.rho_metric) {
      // Fine-tune the transmitted k against the decoder-side probabilities.
      const Grid4<float> yhat = symbols_to_grid(
          dbg.yhat, model.cfg.latent_channels, model.cfg.y_spatial(w));
      const Grid4<float> prob = sigmoid(synthesis(yhat, model.synthesis));
      const RhoResult r = tune_rho(
          cubes[i],
          std::span<const float>(prob.data(), std::size_t(prob.v.size())),
          *options.rho_metric);
      p.k = r.k_f;
    }
    payloads[i] = std::move(p);
  });

  ByteWriter wtr;
  wtr.put_bytes(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(kBitstreamMagic), 4));
  wtr.put<std::uint8_t>(kBitstreamVersion);
  wtr.put<std::uint8_t>(options.factorized_y ? 1 : 0);
  wtr.put<std::uint8_t>(std::uint8_t(ps.precision));
  wtr.put<std::uint32_t>(options.scale.num);
  wtr.put<std::uint32_t>(options.scale.den);
  wtr.put<std::uint16_t>(std::uint16_t(w));
  const NetConfig& cfg = model.cfg;
  wtr.put<std::uint8_t>(std::uint8_t(cfg.profile_id));
  wtr.put<std::uint8_t>(std::uint8_t(cfg.stages));
  wtr.put<std::uint8_t>(std::uint8_t(cfg.vrn_per_stage));
  for (int c : cfg.base_channels) wtr.put<std::uint16_t>(std::uint16_t(c));
  wtr.put<std::uint16_t>(std::uint16_t(cfg.latent_channels));
  wtr.put<std::uint16_t>(std::uint16_t(cfg.hyper_channels));
  wtr.put<std::uint8_t>(std::uint8_t(set.grid_levels));
  wtr.put<std::uint32_t>(std::uint32_t(cubes.size()));
  wtr.put<std::uint64_t>(std::uint64_t(input.points.size()));
  const std::uint64_t header_bits = 8 * std::uint64_t(wtr.bytes.size());

  const auto octree = encode_cube_positions(set);
  wtr.put<std::uint32_t>(std::uint32_t(octree.size()));
  wtr.put_bytes(octree);
  const std::uint64_t octree_bits = 8 * (4 + std::uint64_t(octree.size()));

  BitWriter kw;
  for (const CubePayload& p : payloads) write_k(kw, p.k, w);
  const auto k_section = kw.finish();
  wtr.put_bytes(k_section);
  const std::uint64_t k_bits = 8 * std::uint64_t(k_section.size());

  const std::size_t payload_start = wtr.bytes.size();
  for (const CubePayload& p : payloads) {
    wtr.put<std::int16_t>(p.y_lo);
    wtr.put<std::int16_t>(p.y_hi);
    if (options.factorized_y) {
      for (const auto& [m, s] : p.y_factors) {
        wtr.put<std::int16_t>(m);
        wtr.put<std::uint8_t>(s);
      }
    } else {
      wtr.put<std::int16_t>(p.z_lo);
      wtr.put<std::int16_t>(p.z_hi);
      write_stream(wtr, p.z_stream);
    }
    write_stream(wtr, p.y_stream);
  }

  if (stats) {
    stats->header_bits = header_bits;
    stats->octree_bits = octree_bits;
    stats->k_bits = k_bits;
    stats->payload_bits = 8 * std::uint64_t(wtr.bytes.size() - payload_start);
    stats->total_bits = 8 * std::uint64_t(wtr.bytes.size());
    stats->point_count = input.points.size();
  }
  return std::move(wtr.bytes);
}

PointSet decode_pointcloud(std::span<const std::uint8_t> bitstream,
                           const Model<float>& model, int threads) {
  ParsedBitstream parsed = parse_bitstream(bitstream);
  if (!(model.cfg == parsed.info.net))
    throw ConfigError("decode: model does not match bitstream network config");

  std::vector<Cube> cubes(parsed.payloads.size());
  parallel_for(parsed.payloads.size(), threads, [&](std::size_t i) {
    cubes[i] = decode_cube(parsed.payloads[i], model, parsed.info.cube_size,
                           parsed.info.factorized_y);
    cubes[i].grid_pos = parsed.set.indices[i];
  });

  const VoxelSet assembled = assemble(parsed.set, cubes, parsed.info.cube_size);
  PointSet out = inverse_scale(assembled, parsed.info.scale);
  out.precision = std::max(out.precision, parsed.info.precision);
  return out;
}

BitstreamInfo inspect_bitstream(std::span<const std::uint8_t> bitstream) {
  return parse_bitstream(bitstream).info;
}

std::string format_info(const BitstreamInfo& info) {
  std::ostringstream out;
  out << "version: " << int(info.version) << "\n"
      << "mode: " << (info.factorized_y ? "factorized" : "hyperprior") << "\n"
      << "precision: " << info.precision << "\n"
      << "scale: " << info.scale.num << "/" << info.scale.den << "\n"
      << "cube_size: " << info.cube_size << "\n"
      << "profile: " << info.net.profile_id << " stages=" << info.net.stages
      << " vrn=" << info.net.vrn_per_stage << " base=";
  for (std::size_t i = 0; i < info.net.base_channels.size(); ++i)
    out << (i ? "," : "") << info.net.base_channels[i];
  out << " latent=" << info.net.latent_channels
      << " hyper=" << info.net.hyper_channels << "\n"
      << "grid_levels: " << info.grid_levels << "\n"
      << "cubes: " << info.cube_count << "\n"
      << "points: " << info.point_count << "\n"
      << "header_bits: " << info.stats.header_bits << "\n"
      << "octree_bits: " << info.stats.octree_bits << "\n"
      << "k_bits: " << info.stats.k_bits << "\n"
      << "payload_bits: " << info.stats.payload_bits << "\n"
      << "total_bits: " << info.stats.total_bits << "\n";
  char bpp[64];
  std::snprintf(bpp, sizeof(bpp), "bpp: %.6f\n", info.stats.bpp());
  out << bpp;
  for (const auto& c : info.cubes) {
    out << "cube (" << c.grid_pos[0] << "," << c.grid_pos[1] << ","
        << c.grid_pos[2] << ") k=" << c.k << " z_bytes=" << c.z_bytes
        << " y_bytes=" << c.y_bytes << " escapes=" << c.escapes << "\n";
  }
  return out.str();
}

}  // namespace pcgc
