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

#include <cstring>
#include <fstream>
#include <string>

#include "pcgc/transforms.hpp"

// Checkpoint file layout (little-endian):
//   "PCKP"  u8 version=1
//   f64 lambda
//   u8 profile_id, u8 stages, u8 vrn_per_stage,
//   u16 base_channels[stages], u16 latent_channels, u16 hyper_channels
//   u32 array_count
//   per array: u16 name_len, name bytes, u8 dtype (0=f32, 1=f64),
//              u8 ndim=1, u32 dim0, raw values
// Arrays appear in for_each_param order. Training saves f64; the codec
// loads as f32 with a deterministic narrowing cast.

namespace pcgc {

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ParseError("checkpoint: truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

template <typename S>
std::string serialize_checkpoint(const Model<S>& model, double lambda) {
  using namespace detail;
  std::string out;
  out.append("PCKP");
  put_le<std::uint8_t>(out, 1);
  put_le<double>(out, lambda);
  const NetConfig& c = model.cfg;
  put_le<std::uint8_t>(out, std::uint8_t(c.profile_id));
  put_le<std::uint8_t>(out, std::uint8_t(c.stages));
  put_le<std::uint8_t>(out, std::uint8_t(c.vrn_per_stage));
  for (int ch : c.base_channels) put_le<std::uint16_t>(out, std::uint16_t(ch));
  put_le<std::uint16_t>(out, std::uint16_t(c.latent_channels));
  put_le<std::uint16_t>(out, std::uint16_t(c.hyper_channels));

  std::uint32_t count = 0;
  for_each_param(const_cast<Model<S>&>(model),
                 [&](const std::string&, ArrayX<S>&) { ++count; });
  put_le<std::uint32_t>(out, count);
  for_each_param(const_cast<Model<S>&>(model),
                 [&](const std::string& name, ArrayX<S>& a) {
                   put_le<std::uint16_t>(out, std::uint16_t(name.size()));
                   out.append(name);
                   put_le<std::uint8_t>(out, sizeof(S) == 8 ? 1 : 0);
                   put_le<std::uint8_t>(out, 1);
                   put_le<std::uint32_t>(out, std::uint32_t(a.size()));
                   for (Eigen::Index i = 0; i < a.size(); ++i)
                     put_le<S>(out, a[i]);
                 });
  return out;
}

template <typename S>
struct Checkpoint {
  Model<S> model;
  double lambda = 0.0;
};

template <typename S>
Checkpoint<S> parse_checkpoint(const std::string& data) {
  using namespace detail;
  std::size_t pos = 0;
  if (data.size() < 5 || data.compare(0, 4, "PCKP") != 0)
    throw ParseError("checkpoint: bad magic");
  pos = 4;
  const auto version = get_le<std::uint8_t>(data, pos);
  if (version != 1) throw ParseError("checkpoint: unsupported version");

  Checkpoint<S> ck;
  ck.lambda = get_le<double>(data, pos);
  NetConfig cfg;
  cfg.profile_id = get_le<std::uint8_t>(data, pos);
  cfg.stages = get_le<std::uint8_t>(data, pos);
  cfg.vrn_per_stage = get_le<std::uint8_t>(data, pos);
  cfg.base_channels.clear();
  for (int i = 0; i < cfg.stages; ++i)
    cfg.base_channels.push_back(get_le<std::uint16_t>(data, pos));
  cfg.latent_channels = get_le<std::uint16_t>(data, pos);
  cfg.hyper_channels = get_le<std::uint16_t>(data, pos);
  ck.model = make_model<S>(cfg);

  const auto count = get_le<std::uint32_t>(data, pos);
  std::uint32_t seen = 0;
  for_each_param(ck.model, [&](const std::string& name, ArrayX<S>& a) {
    if (seen++ >= count) throw ParseError("checkpoint: missing array");
    const auto name_len = get_le<std::uint16_t>(data, pos);
    if (pos + name_len > data.size()) throw ParseError("checkpoint: truncated");
    const std::string stored(data, pos, name_len);
    pos += name_len;
    if (stored != name)
      throw ParseError("checkpoint: unexpected array '" + stored +
                       "', wanted '" + name + "'");
    const auto dtype = get_le<std::uint8_t>(data, pos);
    if (dtype > 1) throw ParseError("checkpoint: unknown dtype");
    const auto ndim = get_le<std::uint8_t>(data, pos);
    if (ndim != 1) throw ParseError("checkpoint: unexpected rank");
    const auto len = get_le<std::uint32_t>(data, pos);
    if (Eigen::Index(len) != a.size())
      throw ParseError("checkpoint: shape mismatch for '" + name + "'");
    for (std::uint32_t i = 0; i < len; ++i) {
      if (dtype == 1)
        a[i] = S(get_le<double>(data, pos));
      else
        a[i] = S(get_le<float>(data, pos));
    }
  });
  if (seen != count) throw ParseError("checkpoint: extra arrays");
  return ck;
}

template <typename S>
void save_checkpoint(const std::string& path, const Model<S>& model,
                     double lambda) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  const std::string data = serialize_checkpoint(model, lambda);
  out.write(data.data(), std::streamsize(data.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint<S>(data);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace pcgc
