#pragma once

// Test-only reference implementations, written independently of the library
// code paths they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "strokepatch/raster.hpp"
#include "strokepatch/tensor.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// Supersampling rasterization oracle: fraction of a 16x16 subsample grid
// inside the primitive's geometry.
// ---------------------------------------------------------------------------

inline double point_segment_dist2(double px, double py, double ax, double ay, double bx,
                                  double by) {
  const double vx = bx - ax, vy = by - ay;
  const double wx = px - ax, wy = py - ay;
  const double vv = vx * vx + vy * vy;
  double t = 0.0;
  if (vv > 0.0) t = (wx * vx + wy * vy) / vv;
  if (t < 0.0) t = 0.0;
  if (t > 1.0) t = 1.0;
  const double dx = wx - t * vx, dy = wy - t * vy;
  return dx * dx + dy * dy;
}

inline bool inside_capsule(double px, double py, const strokepatch::StrokeRecord& r) {
  const double rad = r.thickness / 2.0;
  return point_segment_dist2(px, py, r.x1, r.y1, r.x2, r.y2) <= rad * rad;
}

inline bool inside_diamond(double px, double py, const strokepatch::StrokeRecord& r) {
  const double dx = static_cast<double>(r.x2) - r.x1;
  const double dy = static_cast<double>(r.y2) - r.y1;
  const double len = std::sqrt(dx * dx + dy * dy);
  if (len == 0.0) return false;
  const double ux = dx / len, uy = dy / len;
  // coordinates in the rotated frame
  const double rx = px - r.x1, ry = py - r.y1;
  const double u = rx * ux + ry * uy;
  const double v = -rx * uy + ry * ux;
  return std::abs(u) / (len / 2.0) + std::abs(v) / (r.thickness / 2.0) <= 1.0;
}

inline bool inside_wedge(double px, double py, const strokepatch::StrokeRecord& r) {
  const double dx = static_cast<double>(r.x2) - r.x1;
  const double dy = static_cast<double>(r.y2) - r.y1;
  const double len = std::sqrt(dx * dx + dy * dy);
  if (len == 0.0) return false;
  const double nx = -dy / len, ny = dx / len;
  const double ht = r.thickness / 2.0;
  const double ax = r.x1 + nx * ht, ay = r.y1 + ny * ht;
  const double bx = r.x1 - nx * ht, by = r.y1 - ny * ht;
  const double cx = r.x2, cy = r.y2;
  auto side = [&](double x0, double y0, double x1, double y1) {
    return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
  };
  const double s1 = side(ax, ay, bx, by);
  const double s2 = side(bx, by, cx, cy);
  const double s3 = side(cx, cy, ax, ay);
  const bool has_neg = s1 < 0 || s2 < 0 || s3 < 0;
  const bool has_pos = s1 > 0 || s2 > 0 || s3 > 0;
  return !(has_neg && has_pos);
}

inline std::array<strokepatch::detail::Vec2, 5> polyline_points(
    const strokepatch::StrokeRecord& r) {
  const double dx = static_cast<double>(r.x2) - r.x1;
  const double dy = static_cast<double>(r.y2) - r.y1;
  const double len = std::sqrt(dx * dx + dy * dy);
  double theta = std::atan2(dy, dx);
  std::array<strokepatch::detail::Vec2, 5> pts;
  pts[0] = {r.x1, r.y1};
  for (std::size_t i = 0; i < 4; ++i) {
    if (i > 0) theta += r.joint_jitter[i - 1];
    pts[i + 1] = {pts[i].x + len / 4.0 * std::cos(theta),
                  pts[i].y + len / 4.0 * std::sin(theta)};
  }
  return pts;
}

inline bool inside_polyline(double px, double py, const strokepatch::StrokeRecord& r) {
  const auto pts = polyline_points(r);
  const double rad = r.thickness / 2.0;
  for (std::size_t i = 0; i < 4; ++i) {
    if (point_segment_dist2(px, py, pts[i].x, pts[i].y, pts[i + 1].x, pts[i + 1].y) <= rad * rad)
      return true;
  }
  return false;
}

inline bool inside_primitive(double px, double py, const strokepatch::StrokeRecord& r) {
  switch (r.primitive) {
    case strokepatch::Primitive::capsule: return inside_capsule(px, py, r);
    case strokepatch::Primitive::diamond: return inside_diamond(px, py, r);
    case strokepatch::Primitive::wedge: return inside_wedge(px, py, r);
    case strokepatch::Primitive::polyline: return inside_polyline(px, py, r);
  }
  return false;
}

/// 16x16 supersampled coverage of pixel (x, y).
inline double supersample_coverage(const strokepatch::StrokeRecord& rec, std::size_t x,
                                   std::size_t y, int grid = 16) {
  int hits = 0;
  for (int sy = 0; sy < grid; ++sy) {
    for (int sx = 0; sx < grid; ++sx) {
      const double px = static_cast<double>(x) + (sx + 0.5) / grid;
      const double py = static_cast<double>(y) + (sy + 0.5) / grid;
      if (inside_primitive(px, py, rec)) ++hits;
    }
  }
  return static_cast<double>(hits) / (grid * grid);
}

// ---------------------------------------------------------------------------
// Naive quadruple-loop convolution (same padding, stride 1).
// ---------------------------------------------------------------------------

template <typename T>
strokepatch::Tensor<T> naive_conv2d_same(const strokepatch::Tensor<T>& x,
                                         const strokepatch::Tensor<T>& w,
                                         const strokepatch::Tensor<T>& bias) {
  const std::ptrdiff_t co_n = static_cast<std::ptrdiff_t>(w.dim(0));
  const std::ptrdiff_t ci_n = static_cast<std::ptrdiff_t>(w.dim(1));
  const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(w.dim(2));
  const std::ptrdiff_t pad = k / 2;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(x.dim(1));
  const std::ptrdiff_t wd = static_cast<std::ptrdiff_t>(x.dim(2));
  strokepatch::Tensor<T> out({static_cast<std::size_t>(co_n), static_cast<std::size_t>(h),
                              static_cast<std::size_t>(wd)});
  for (std::ptrdiff_t co = 0; co < co_n; ++co) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < wd; ++xx) {
        double acc = static_cast<double>(bias[static_cast<std::size_t>(co)]);
        for (std::ptrdiff_t ci = 0; ci < ci_n; ++ci) {
          for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
            for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t sy = y + ky - pad;
              const std::ptrdiff_t sx = xx + kx - pad;
              if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
              acc += static_cast<double>(
                         x.at(static_cast<std::size_t>(ci), static_cast<std::size_t>(sy),
                              static_cast<std::size_t>(sx))) *
                     static_cast<double>(
                         w[static_cast<std::size_t>(((co * ci_n + ci) * k + ky) * k + kx)]);
            }
          }
        }
        out.at(static_cast<std::size_t>(co), static_cast<std::size_t>(y),
               static_cast<std::size_t>(xx)) = static_cast<T>(acc);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scalar Adam reference.
// ---------------------------------------------------------------------------

struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long t = 0;

  double step(double p, double g, double lr, double b1 = 0.9, double b2 = 0.999,
              double eps = 1e-8) {
    t += 1;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    return p - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov statistic against U(lo, hi).
// ---------------------------------------------------------------------------

inline double ks_statistic_uniform(std::vector<double> samples, double lo, double hi) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = (samples[i] - lo) / (hi - lo);
    const double lo_emp = static_cast<double>(i) / n;
    const double hi_emp = static_cast<double>(i + 1) / n;
    d = std::max({d, std::abs(cdf - lo_emp), std::abs(cdf - hi_emp)});
  }
  return d;
}

}  // namespace oracles
