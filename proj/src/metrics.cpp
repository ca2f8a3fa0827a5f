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

#include "pcgc/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

#include "pcgc/threading.hpp"

namespace pcgc {

// ---- k-d tree --------------------------------------------------------------

KdTree3::KdTree3(const std::vector<Coord>& points) {
  pts_.reserve(points.size());
  for (const Coord& c : points)
    pts_.push_back({double(c[0]), double(c[1]), double(c[2])});
  order_.resize(pts_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(pts_.size());
  if (!pts_.empty()) root_ = build(0, pts_.size(), 0);
}

std::int32_t KdTree3::build(std::size_t begin, std::size_t end, int depth) {
  const int axis = depth % 3;
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + std::ptrdiff_t(begin),
                   order_.begin() + std::ptrdiff_t(mid),
                   order_.begin() + std::ptrdiff_t(end),
                   [&](std::size_t a, std::size_t b) {
                     if (pts_[a][std::size_t(axis)] != pts_[b][std::size_t(axis)])
                       return pts_[a][std::size_t(axis)] < pts_[b][std::size_t(axis)];
                     return a < b;
                   });
  Node node;
  node.axis = axis;
  node.point = order_[mid];
  const std::int32_t id = std::int32_t(nodes_.size());
  nodes_.push_back(node);
  if (mid > begin) nodes_[std::size_t(id)].left = build(begin, mid, depth + 1);
  if (mid + 1 < end) nodes_[std::size_t(id)].right = build(mid + 1, end, depth + 1);
  return id;
}

namespace {

double dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

std::pair<std::size_t, double> KdTree3::nearest(
    const std::array<double, 3>& q) const {
  if (root_ < 0) throw ConfigError("kd-tree: empty point set");
  std::size_t best = nodes_[std::size_t(root_)].point;
  double best_d = std::numeric_limits<double>::infinity();
  // Explicit stack; depth is bounded by the tree height.
  std::vector<std::int32_t> stack{root_};
  while (!stack.empty()) {
    const std::int32_t id = stack.back();
    stack.pop_back();
    if (id < 0) continue;
    const Node& n = nodes_[std::size_t(id)];
    const double d = dist2(q, pts_[n.point]);
    if (d < best_d || (d == best_d && n.point < best)) {
      best_d = d;
      best = n.point;
    }
    const double delta = q[std::size_t(n.axis)] - pts_[n.point][std::size_t(n.axis)];
    const std::int32_t near = delta <= 0 ? n.left : n.right;
    const std::int32_t far = delta <= 0 ? n.right : n.left;
    if (far >= 0 && delta * delta <= best_d) stack.push_back(far);
    if (near >= 0) stack.push_back(near);
  }
  return {best, best_d};
}

std::vector<std::size_t> KdTree3::knearest(const std::array<double, 3>& q,
                                           std::size_t k) const {
  if (root_ < 0) throw ConfigError("kd-tree: empty point set");
  k = std::min(k, pts_.size());
  // Max-heap of (distance, index) keeping the k closest.
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry> heap;
  std::vector<std::int32_t> stack{root_};
  while (!stack.empty()) {
    const std::int32_t id = stack.back();
    stack.pop_back();
    if (id < 0) continue;
    const Node& n = nodes_[std::size_t(id)];
    const double d = dist2(q, pts_[n.point]);
    if (heap.size() < k) {
      heap.emplace(d, n.point);
    } else if (d < heap.top().first ||
               (d == heap.top().first && n.point < heap.top().second)) {
      heap.pop();
      heap.emplace(d, n.point);
    }
    const double delta = q[std::size_t(n.axis)] - pts_[n.point][std::size_t(n.axis)];
    const std::int32_t near = delta <= 0 ? n.left : n.right;
    const std::int32_t far = delta <= 0 ? n.right : n.left;
    if (far >= 0 && (heap.size() < k || delta * delta <= heap.top().first))
      stack.push_back(far);
    if (near >= 0) stack.push_back(near);
  }
  std::vector<std::size_t> out;
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top().second);
    heap.pop();
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- distortion metrics -----------------------------------------------------

namespace {

double directed_d1(const std::vector<Coord>& from, const KdTree3& to_tree) {
  double sum = 0.0;
  for (const Coord& c : from) {
    const auto [idx, d2v] =
        to_tree.nearest({double(c[0]), double(c[1]), double(c[2])});
    (void)idx;
    sum += d2v;
  }
  return sum / double(from.size());
}

}  // namespace

double d1_mse(const PointSet& a, const PointSet& b) {
  if (a.points.empty() || b.points.empty())
    throw ConfigError("d1_mse: empty point set");
  const KdTree3 ta(a.points), tb(b.points);
  return std::max(directed_d1(a.points, tb), directed_d1(b.points, ta));
}

double d2_mse(const PointSet& a, const PointSet& b, const NormalField& nb) {
  if (a.points.empty() || b.points.empty())
    throw ConfigError("d2_mse: empty point set");
  if (nb.normals.size() != b.points.size())
    throw ConfigError("d2_mse: missing reference normals");
  const KdTree3 ta(a.points), tb(b.points);

  // a -> b: project the error on the normal of the matched reference point.
  double e_ab = 0.0;
  for (const Coord& c : a.points) {
    const std::array<double, 3> q{double(c[0]), double(c[1]), double(c[2])};
    const auto [idx, d2v] = tb.nearest(q);
    (void)d2v;
    const auto& bp = b.points[idx];
    const auto& n = nb.normals[idx];
    const double dot = (q[0] - bp[0]) * n[0] + (q[1] - bp[1]) * n[1] +
                       (q[2] - bp[2]) * n[2];
    e_ab += dot * dot;
  }
  e_ab /= double(a.points.size());

  // b -> a: the reference point carries its own normal.
  double e_ba = 0.0;
  for (std::size_t i = 0; i < b.points.size(); ++i) {
    const auto& bp = b.points[i];
    const std::array<double, 3> q{double(bp[0]), double(bp[1]), double(bp[2])};
    const auto [idx, d2v] = ta.nearest(q);
    (void)d2v;
    const auto& ap = a.points[idx];
    const auto& n = nb.normals[i];
    const double dot = (q[0] - ap[0]) * n[0] + (q[1] - ap[1]) * n[1] +
                       (q[2] - ap[2]) * n[2];
    e_ba += dot * dot;
  }
  e_ba /= double(b.points.size());

  return std::max(e_ab, e_ba);
}

NormalField estimate_normals(const PointSet& ps, int k) {
  if (ps.points.size() < 3)
    throw ConfigError("estimate_normals: need at least 3 points");
  const KdTree3 tree(ps.points);
  NormalField field;
  field.normals.resize(ps.points.size());
  for (std::size_t i = 0; i < ps.points.size(); ++i) {
    const Coord& c = ps.points[i];
    const std::array<double, 3> q{double(c[0]), double(c[1]), double(c[2])};
    const auto nb = tree.knearest(q, std::size_t(k) + 1);  // includes self

    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t j : nb)
      mean += Eigen::Vector3d(ps.points[j][0], ps.points[j][1], ps.points[j][2]);
    mean /= double(nb.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t j : nb) {
      const Eigen::Vector3d d =
          Eigen::Vector3d(ps.points[j][0], ps.points[j][1], ps.points[j][2]) -
          mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    Eigen::Vector3d n = solver.eigenvectors().col(0);  // smallest eigenvalue
    n.normalize();
    if (n.z() < 0 || (n.z() == 0 && (n.y() < 0 || (n.y() == 0 && n.x() < 0))))
      n = -n;
    field.normals[i] = {n.x(), n.y(), n.z()};
  }
  return field;
}

double psnr(double mse, int precision) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double p = double((std::int64_t(1) << precision) - 1);
  return 10.0 * std::log10(3.0 * p * p / mse);
}

// ---- BD-rate ----------------------------------------------------------------

namespace {

struct Pchip {
  std::vector<double> x, y, d;  // knots and endpoint-adjusted slopes

  static Pchip fit(std::vector<std::pair<double, double>> pts) {
    std::sort(pts.begin(), pts.end());
    const std::size_t n = pts.size();
    for (std::size_t i = 1; i < n; ++i)
      if (pts[i].first == pts[i - 1].first)
        throw ConfigError("bd_rate: duplicate PSNR values in a curve");
    Pchip p;
    p.x.resize(n);
    p.y.resize(n);
    p.d.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      p.x[i] = pts[i].first;
      p.y[i] = pts[i].second;
    }
    std::vector<double> h(n - 1), slope(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = p.x[i + 1] - p.x[i];
      slope[i] = (p.y[i + 1] - p.y[i]) / h[i];
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (slope[i - 1] * slope[i] <= 0) {
        p.d[i] = 0.0;
      } else {
        const double w1 = 2 * h[i] + h[i - 1];
        const double w2 = h[i] + 2 * h[i - 1];
        p.d[i] = (w1 + w2) / (w1 / slope[i - 1] + w2 / slope[i]);
      }
    }
    auto endpoint = [](double h0, double h1, double s0, double s1) {
      double d0 = ((2 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
      if (d0 * s0 <= 0)
        d0 = 0.0;
      else if (s0 * s1 < 0 && std::abs(d0) > 3 * std::abs(s0))
        d0 = 3 * s0;
      return d0;
    };
    p.d[0] = endpoint(h[0], h[1], slope[0], slope[1]);
    p.d[n - 1] = endpoint(h[n - 2], h[n - 3], slope[n - 2], slope[n - 3]);
    return p;
  }

  // Antiderivative of the Hermite segment, evaluated at normalized s.
  static double hermite_integral(double s, double y0, double y1, double m0,
                                 double m1, double h) {
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
    const double i00 = s4 / 2 - s3 + s;
    const double i10 = s4 / 4 - 2 * s3 / 3 + s2 / 2;
    const double i01 = -s4 / 2 + s3;
    const double i11 = s4 / 4 - s3 / 3;
    return h * (i00 * y0 + i10 * h * m0 + i01 * y1 + i11 * h * m1);
  }

  double integrate(double a, double b) const {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
      const double x0 = x[i], x1 = x[i + 1];
      const double lo = std::max(a, x0), hi = std::min(b, x1);
      if (lo >= hi) continue;
      const double h = x1 - x0;
      const double s0 = (lo - x0) / h, s1 = (hi - x0) / h;
      total += hermite_integral(s1, y[i], y[i + 1], d[i], d[i + 1], h) -
               hermite_integral(s0, y[i], y[i + 1], d[i], d[i + 1], h);
    }
    return total;
  }
};

}  // namespace

double bd_rate(std::span<const RdPoint> curve_a,
               std::span<const RdPoint> curve_b) {
  if (curve_a.size() < 4 || curve_b.size() < 4)
    throw ConfigError("bd_rate: need at least 4 points per curve");
  auto to_pairs = [](std::span<const RdPoint> c) {
    std::vector<std::pair<double, double>> pts;
    for (const RdPoint& p : c) {
      if (!(p.bpp > 0)) throw ConfigError("bd_rate: rates must be positive");
      pts.emplace_back(p.psnr, std::log10(p.bpp));
    }
    return pts;
  };
  const Pchip fa = Pchip::fit(to_pairs(curve_a));
  const Pchip fb = Pchip::fit(to_pairs(curve_b));
  const double lo = std::max(fa.x.front(), fb.x.front());
  const double hi = std::min(fa.x.back(), fb.x.back());
  if (!(lo < hi)) throw ConfigError("bd_rate: PSNR ranges do not overlap");
  const double avg = (fb.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

// ---- evaluation sweep ---------------------------------------------------------

std::vector<EvalRow> eval_run(std::span<const RatedModel> models,
                              std::span<const NamedCloud> clouds,
                              std::span<const Rational> scales, int cube_size,
                              bool factorized_y, int threads) {
  std::vector<EvalRow> rows;
  for (const RatedModel& rm : models) {
    for (const Rational& scale : scales) {
      for (const NamedCloud& nc : clouds) {
        EncodeOptions opt;
        opt.scale = scale;
        opt.cube_size = cube_size;
        opt.factorized_y = factorized_y;
        opt.threads = threads;
        BitstreamStats stats;
        const auto bits = encode_pointcloud(nc.cloud, *rm.model, opt, &stats);
        const PointSet decoded = decode_pointcloud(bits, *rm.model, threads);
        EvalRow row;
        row.cloud = nc.name;
        row.scale = scale;
        row.lambda = rm.lambda;
        row.bpp = stats.bpp();
        row.d1_psnr = psnr(d1_mse(decoded, nc.cloud), nc.cloud.precision);
        const NormalField normals = estimate_normals(nc.cloud, 20);
        row.d2_psnr =
            psnr(d2_mse(decoded, nc.cloud, normals), nc.cloud.precision);
        row.meta_bits = stats.metadata_bits();
        row.payload_bits = stats.payload_bits;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string eval_csv(std::span<const EvalRow> rows) {
  std::ostringstream out;
  out << "cloud,scale,lambda,bpp,d1_psnr,d2_psnr,meta_bits,payload_bits\n";
  for (const EvalRow& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%u/%u,%g,%.6f,%.4f,%.4f,%llu,%llu\n",
                  r.cloud.c_str(), r.scale.num, r.scale.den, r.lambda, r.bpp,
                  r.d1_psnr, r.d2_psnr,
                  (unsigned long long)r.meta_bits,
                  (unsigned long long)r.payload_bits);
    out << buf;
  }
  return out.str();
}

}  // namespace pcgc
