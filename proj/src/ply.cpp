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

#include "pcgc/ply.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace pcgc {

namespace {

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<std::string> properties;  // scalar property names, "" for lists
};

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw ParseError("ply: line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(const std::string& tok, std::size_t line) {
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  double value = 0.0;
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end)
    fail(line, "not a number: '" + tok + "'");
  if (!std::isfinite(value)) fail(line, "non-finite coordinate");
  return value;
}

}  // namespace

PointSet parse_ply(const std::string& text) {
  // Read logical lines; tolerate CRLF input, always treat LF as terminator.
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t nl = text.find('\n', start);
      std::string line = text.substr(
          start, nl == std::string::npos ? std::string::npos : nl - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
  }

  std::size_t ln = 0;
  auto next_line = [&]() -> const std::string* {
    while (ln < lines.size()) {
      const std::string& l = lines[ln++];
      if (!l.empty()) return &l;
    }
    return nullptr;
  };

  const std::string* l = next_line();
  if (!l || *l != "ply") fail(ln, "missing 'ply' magic");

  std::vector<Element> elements;
  bool format_seen = false;
  bool header_done = false;
  while ((l = next_line())) {
    const auto tok = split_ws(*l);
    if (tok.empty()) continue;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii")
        fail(ln, "only ASCII PLY is supported");
      format_seen = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) fail(ln, "malformed element declaration");
      Element e;
      e.name = tok[1];
      std::size_t count = 0;
      auto res = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(),
                                 count);
      if (res.ec != std::errc()) fail(ln, "bad element count");
      e.count = count;
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty()) fail(ln, "property before any element");
      if (tok.size() < 3) fail(ln, "malformed property declaration");
      // A list property consumes a variable token count per line; mark it.
      elements.back().properties.push_back(tok[1] == "list" ? ""
                                                            : tok.back());
    } else if (tok[0] == "end_header") {
      header_done = true;
      break;
    } else {
      fail(ln, "unknown header keyword '" + tok[0] + "'");
    }
  }
  if (!header_done) fail(ln, "missing end_header");
  if (!format_seen) fail(ln, "missing format declaration");

  const auto vertex_it =
      std::find_if(elements.begin(), elements.end(),
                   [](const Element& e) { return e.name == "vertex"; });
  if (vertex_it == elements.end()) fail(ln, "no vertex element");

  int ix = -1, iy = -1, iz = -1;
  for (std::size_t i = 0; i < vertex_it->properties.size(); ++i) {
    const std::string& name = vertex_it->properties[i];
    if (name == "x") ix = int(i);
    if (name == "y") iy = int(i);
    if (name == "z") iz = int(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) fail(ln, "vertex element lacks x/y/z");

  PointSet ps;
  std::int64_t max_coord = 0;
  for (const Element& e : elements) {
    for (std::size_t row = 0; row < e.count; ++row) {
      l = next_line();
      if (!l) {
        throw ParseError("ply: element count mismatch: element '" + e.name +
                         "' declares " + std::to_string(e.count) +
                         " rows but the body ends after " +
                         std::to_string(row));
      }
      if (e.name != "vertex") continue;  // skip rows of other elements
      const auto tok = split_ws(*l);
      if (tok.size() < e.properties.size())
        fail(ln, "vertex row has too few values");
      Coord c;
      for (auto [axis, idx] : {std::pair{0, ix}, {1, iy}, {2, iz}}) {
        const double v = parse_number(tok[std::size_t(idx)], ln);
        const std::int64_t r = round_half_away(v);
        if (r < 0) fail(ln, "negative coordinate");
        c[std::size_t(axis)] = std::int32_t(r);
        max_coord = std::max(max_coord, r);
      }
      ps.points.push_back(c);
    }
  }
  if (next_line() != nullptr)
    throw ParseError("ply: element count mismatch: trailing data after line " +
                     std::to_string(ln));

  ps.precision = bits_for_max_coord(std::int32_t(max_coord));
  return ps;
}

std::string write_ply(const PointSet& ps) {
  std::ostringstream out;
  out << "ply\n"
      << "format ascii 1.0\n"
      << "element vertex " << ps.points.size() << "\n"
      << "property int x\n"
      << "property int y\n"
      << "property int z\n"
      << "end_header\n";
  for (const Coord& c : ps.points)
    out << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
  return out.str();
}

PointSet read_ply_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_ply(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_ply_file(const std::string& path, const PointSet& ps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << write_ply(ps);
}

}  // namespace pcgc
