#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "strokepatch/common.hpp"
#include "strokepatch/rng.hpp"
#include "strokepatch/style.hpp"
#include "strokepatch/tensor.hpp"

namespace strokepatch {

/// One sampled stroke. Endpoints are in pixel coordinates and may lie
/// outside the canvas; strokes are clipped at the borders when drawn.
struct StrokeRecord {
  Primitive primitive = Primitive::capsule;
  float x1 = 0.f, y1 = 0.f, x2 = 0.f, y2 = 0.f;
  float thickness = 1.f;
  Rgba color = kBlack;                     // rgb + effective alpha
  std::uint32_t order = 0;                 // raster order within the patch
  std::array<float, 3> joint_jitter{};     // polyline joint bends in radians
};

/// Draws the stroke parameters of Algorithm-style patch generation:
/// orientation uniform on [0, 2pi), start point uniform on the canvas
/// expanded by L/2 on every side, endpoint L away along the orientation.
inline StrokeRecord sample_stroke(const StrokeStyleSpec& spec, Rng& rng) {
  StrokeRecord rec;
  rec.primitive = spec.primitive;
  rec.thickness = spec.stroke_thickness;
  const double two_pi = 6.283185307179586476925286766559;
  const double phi = rng.uniform(0.0, two_pi);
  const double half_len = static_cast<double>(spec.stroke_length) / 2.0;
  rec.x1 = static_cast<float>(rng.uniform(-half_len, spec.width + half_len));
  rec.y1 = static_cast<float>(rng.uniform(-half_len, spec.height + half_len));
  rec.x2 = static_cast<float>(rec.x1 + spec.stroke_length * std::cos(phi));
  rec.y2 = static_cast<float>(rec.y1 + spec.stroke_length * std::sin(phi));
  if (spec.color_mode == ColorMode::random_rgb) {
    rec.color.r = static_cast<float>(rng.uniform());
    rec.color.g = static_cast<float>(rng.uniform());
    rec.color.b = static_cast<float>(rng.uniform());
  } else {
    rec.color.r = spec.stroke_color.r;
    rec.color.g = spec.stroke_color.g;
    rec.color.b = spec.stroke_color.b;
  }
  rec.color.a = spec.opacity;
  if (spec.primitive == Primitive::polyline) {
    const double quarter_pi = 0.78539816339744830961566084581988;
    for (auto& j : rec.joint_jitter)
      j = static_cast<float>(rng.uniform(-quarter_pi, quarter_pi));
  }
  return rec;
}

namespace detail {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline double dist_point_segment(double px, double py, double ax, double ay, double bx,
                                 double by) {
  const double abx = bx - ax, aby = by - ay;
  const double apx = px - ax, apy = py - ay;
  const double len2 = abx * abx + aby * aby;
  double t = len2 > 0.0 ? (apx * abx + apy * aby) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = apx - t * abx, dy = apy - t * aby;
  return std::sqrt(dx * dx + dy * dy);
}

/// Source-over composite of one pixel. Zero effective alpha leaves the
/// destination bit-untouched.
inline void composite_pixel(Image& canvas, std::size_t x, std::size_t y, const Rgba& src,
                            float coverage) {
  const float a = coverage * src.a;
  if (a <= 0.f) return;
  const float rgb[3] = {src.r, src.g, src.b};
  for (std::size_t c = 0; c < 3; ++c) {
    float& dst = canvas.at(c, y, x);
    dst = std::clamp(a * rgb[c] + (1.f - a) * dst, 0.f, 1.f);
  }
  if (canvas.channels() == 4) {
    float& dst = canvas.at(3, y, x);
    dst = std::clamp(a + dst * (1.f - a), 0.f, 1.f);
  }
}

struct PixelBounds {
  std::ptrdiff_t x0, x1, y0, y1;  // inclusive pixel index range
  bool empty;
};

inline PixelBounds clip_bounds(const Image& canvas, double min_x, double max_x, double min_y,
                               double max_y, double margin) {
  PixelBounds b{};
  b.x0 = static_cast<std::ptrdiff_t>(std::floor(min_x - margin));
  b.x1 = static_cast<std::ptrdiff_t>(std::ceil(max_x + margin));
  b.y0 = static_cast<std::ptrdiff_t>(std::floor(min_y - margin));
  b.y1 = static_cast<std::ptrdiff_t>(std::ceil(max_y + margin));
  b.x0 = std::max<std::ptrdiff_t>(b.x0, 0);
  b.y0 = std::max<std::ptrdiff_t>(b.y0, 0);
  b.x1 = std::min<std::ptrdiff_t>(b.x1, static_cast<std::ptrdiff_t>(canvas.width()) - 1);
  b.y1 = std::min<std::ptrdiff_t>(b.y1, static_cast<std::ptrdiff_t>(canvas.height()) - 1);
  b.empty = b.x0 > b.x1 || b.y0 > b.y1;
  return b;
}

/// Area of a convex polygon clipped to the unit pixel [px,px+1]x[py,py+1]
/// (Sutherland-Hodgman against the four pixel edges, then the shoelace sum).
inline double polygon_pixel_area(const Vec2* poly, std::size_t n, double px, double py) {
  std::array<Vec2, 16> buf_a, buf_b;
  std::size_t cnt = n;
  for (std::size_t i = 0; i < n; ++i) buf_a[i] = poly[i];
  Vec2* in = buf_a.data();
  Vec2* out = buf_b.data();
  // inside(p) per clip plane: 0:x>=px 1:x<=px+1 2:y>=py 3:y<=py+1
  for (int plane = 0; plane < 4; ++plane) {
    std::size_t m = 0;
    auto inside = [&](const Vec2& p) {
      switch (plane) {
        case 0: return p.x >= px;
        case 1: return p.x <= px + 1.0;
        case 2: return p.y >= py;
        default: return p.y <= py + 1.0;
      }
    };
    auto intersect = [&](const Vec2& a, const Vec2& b) {
      double t;
      if (plane < 2) {
        const double edge = plane == 0 ? px : px + 1.0;
        t = (edge - a.x) / (b.x - a.x);
        return Vec2{edge, a.y + t * (b.y - a.y)};
      }
      const double edge = plane == 2 ? py : py + 1.0;
      t = (edge - a.y) / (b.y - a.y);
      return Vec2{a.x + t * (b.x - a.x), edge};
    };
    for (std::size_t i = 0; i < cnt; ++i) {
      const Vec2& cur = in[i];
      const Vec2& nxt = in[(i + 1) % cnt];
      const bool cur_in = inside(cur);
      const bool nxt_in = inside(nxt);
      if (cur_in) out[m++] = cur;
      if (cur_in != nxt_in) out[m++] = intersect(cur, nxt);
    }
    cnt = m;
    if (cnt == 0) return 0.0;
    std::swap(in, out);
    out = (in == buf_a.data()) ? buf_b.data() : buf_a.data();
  }
  double area2 = 0.0;
  for (std::size_t i = 0; i < cnt; ++i) {
    const Vec2& a = in[i];
    const Vec2& b = in[(i + 1) % cnt];
    area2 += a.x * b.y - b.x * a.y;
  }
  return std::abs(area2) * 0.5;
}

/// Rasterizes a convex polygon with exact pixel-area coverage. A signed
/// per-edge distance classifier skips the clipping work away from the
/// boundary band.
inline void draw_convex_polygon(Image& canvas, const Vec2* poly, std::size_t n,
                                const Rgba& color) {
  double min_x = poly[0].x, max_x = poly[0].x, min_y = poly[0].y, max_y = poly[0].y;
  for (std::size_t i = 1; i < n; ++i) {
    min_x = std::min(min_x, poly[i].x);
    max_x = std::max(max_x, poly[i].x);
    min_y = std::min(min_y, poly[i].y);
    max_y = std::max(max_y, poly[i].y);
  }
  const PixelBounds b = clip_bounds(canvas, min_x, max_x, min_y, max_y, 1.0);
  if (b.empty) return;

  // Inward-normalized edge lines (positive = inside). Degenerate edges are
  // dropped; a fully degenerate polygon has zero area and draws nothing.
  std::array<double, 8> ex{}, ey{}, ec{};
  std::size_t edges = 0;
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& c = poly[(i + 1) % n];
    area2 += a.x * c.y - c.x * a.y;
  }
  if (area2 == 0.0) return;
  const double orient = area2 > 0.0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& c = poly[(i + 1) % n];
    const double dx = c.x - a.x, dy = c.y - a.y;
    const double len = std::sqrt(dx * dx + dy * dy);
    if (len == 0.0) continue;
    // Inward normal for the polygon's winding.
    ex[edges] = -dy / len * orient;
    ey[edges] = dx / len * orient;
    ec[edges] = -(ex[edges] * a.x + ey[edges] * a.y);
    ++edges;
  }
  for (std::ptrdiff_t y = b.y0; y <= b.y1; ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    for (std::ptrdiff_t x = b.x0; x <= b.x1; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      double depth = 1e300;
      for (std::size_t e = 0; e < edges; ++e)
        depth = std::min(depth, ex[e] * cx + ey[e] * cy + ec[e]);
      float cov;
      if (depth >= 0.71) {
        cov = 1.f;  // pixel fully inside (center depth exceeds half-diagonal)
      } else if (depth <= -0.71) {
        continue;
      } else {
        cov = static_cast<float>(polygon_pixel_area(poly, n, static_cast<double>(x),
                                                    static_cast<double>(y)));
      }
      composite_pixel(canvas, static_cast<std::size_t>(x), static_cast<std::size_t>(y), color,
                      cov);
    }
  }
}

/// Horizontal slice of a convex polygon at height y: [lo, hi] on success.
inline bool convex_slice(const Vec2* poly, std::size_t n, double y, double& lo, double& hi) {
  bool found = false;
  lo = 1e300;
  hi = -1e300;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    if (a.y == b.y) {
      if (a.y == y) {
        lo = std::min({lo, a.x, b.x});
        hi = std::max({hi, a.x, b.x});
        found = true;
      }
      continue;
    }
    if ((a.y - y) * (b.y - y) <= 0.0) {
      const double t = (y - a.y) / (b.y - a.y);
      const double x = a.x + t * (b.x - a.x);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      found = true;
    }
  }
  return found;
}

struct Interval {
  double lo, hi;
};

/// Horizontal slice of a capsule (segment a-b swollen by radius r). The
/// capsule is convex, so the hull of the three piece slices is exact.
inline bool capsule_slice(double ax, double ay, double bx, double by, double r, double y,
                          Interval& out) {
  bool found = false;
  double lo = 1e300, hi = -1e300;
  auto add_disc = [&](double cx, double cy) {
    const double dy = y - cy;
    if (std::abs(dy) <= r) {
      const double s = std::sqrt(r * r - dy * dy);
      lo = std::min(lo, cx - s);
      hi = std::max(hi, cx + s);
      found = true;
    }
  };
  add_disc(ax, ay);
  add_disc(bx, by);
  const double dx = bx - ax, dyy = by - ay;
  const double len = std::sqrt(dx * dx + dyy * dyy);
  if (len > 0.0) {
    const double nx = -dyy / len * r, ny = dx / len * r;
    const Vec2 quad[4] = {{ax + nx, ay + ny}, {bx + nx, by + ny}, {bx - nx, by - ny},
                          {ax - nx, ay - ny}};
    double qlo, qhi;
    if (convex_slice(quad, 4, y, qlo, qhi)) {
      lo = std::min(lo, qlo);
      hi = std::max(hi, qhi);
      found = true;
    }
  }
  if (found) out = {lo, hi};
  return found;
}

}  // namespace detail

/// Rasterizes a round-capped thick line using signed-distance coverage:
/// clamp(0.5 + (T/2 - d), 0, 1), a one-pixel anti-aliasing band around the
/// capsule surface. Pixels outside the stroke's expanded bounding box are
/// left bit-unchanged; strokes beyond the canvas clip silently.
inline void draw_capsule(Image& canvas, const StrokeRecord& rec) {
  const double r = static_cast<double>(rec.thickness) / 2.0;
  const detail::PixelBounds b = detail::clip_bounds(
      canvas, std::min(rec.x1, rec.x2), std::max(rec.x1, rec.x2), std::min(rec.y1, rec.y2),
      std::max(rec.y1, rec.y2), r + 1.0);
  if (b.empty) return;
  for (std::ptrdiff_t y = b.y0; y <= b.y1; ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    for (std::ptrdiff_t x = b.x0; x <= b.x1; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      const double d = detail::dist_point_segment(cx, cy, rec.x1, rec.y1, rec.x2, rec.y2);
      const double cov = std::clamp(0.5 + (r - d), 0.0, 1.0);
      if (cov > 0.0)
        detail::composite_pixel(canvas, static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                rec.color, static_cast<float>(cov));
    }
  }
}

/// Rhombus stamp centered at (x1,y1): diagonals L (along the stroke
/// orientation) and T (across it).
inline void draw_diamond(Image& canvas, const StrokeRecord& rec) {
  const double dx = static_cast<double>(rec.x2) - rec.x1;
  const double dy = static_cast<double>(rec.y2) - rec.y1;
  const double len = std::sqrt(dx * dx + dy * dy);
  if (len == 0.0) return;  // zero-length diagonal, empty stamp
  const double ux = dx / len, uy = dy / len;
  const double nx = -uy, ny = ux;
  const double hl = len / 2.0, ht = static_cast<double>(rec.thickness) / 2.0;
  const detail::Vec2 poly[4] = {
      {rec.x1 + ux * hl, rec.y1 + uy * hl},
      {rec.x1 + nx * ht, rec.y1 + ny * ht},
      {rec.x1 - ux * hl, rec.y1 - uy * hl},
      {rec.x1 - nx * ht, rec.y1 - ny * ht},
  };
  detail::draw_convex_polygon(canvas, poly, 4, rec.color);
}

/// Isoceles triangle: base of width T centered at (x1,y1), apex at (x2,y2).
inline void draw_wedge(Image& canvas, const StrokeRecord& rec) {
  const double dx = static_cast<double>(rec.x2) - rec.x1;
  const double dy = static_cast<double>(rec.y2) - rec.y1;
  const double len = std::sqrt(dx * dx + dy * dy);
  if (len == 0.0) return;
  const double nx = -dy / len, ny = dx / len;
  const double ht = static_cast<double>(rec.thickness) / 2.0;
  const detail::Vec2 poly[3] = {
      {rec.x1 + nx * ht, rec.y1 + ny * ht},
      {rec.x1 - nx * ht, rec.y1 - ny * ht},
      {rec.x2, rec.y2},
  };
  detail::draw_convex_polygon(canvas, poly, 3, rec.color);
}

/// Chain of four capsule segments bending by the record's joint jitter.
/// Straight chains are exactly a single capsule and take that path; bent
/// chains rasterize the union with 16 exact-width scanline rows per pixel,
/// which stays faithful to area coverage at the joint corners where a pure
/// distance band does not.
inline void draw_polyline(Image& canvas, const StrokeRecord& rec) {
  const bool straight = rec.joint_jitter[0] == 0.f && rec.joint_jitter[1] == 0.f &&
                        rec.joint_jitter[2] == 0.f;
  const double dx = static_cast<double>(rec.x2) - rec.x1;
  const double dy = static_cast<double>(rec.y2) - rec.y1;
  const double len = std::sqrt(dx * dx + dy * dy);
  if (straight || len == 0.0) {
    draw_capsule(canvas, rec);
    return;
  }
  const double seg_len = len / 4.0;
  double theta = std::atan2(dy, dx);
  std::array<detail::Vec2, 5> pts;
  pts[0] = {rec.x1, rec.y1};
  for (std::size_t i = 0; i < 4; ++i) {
    if (i > 0) theta += rec.joint_jitter[i - 1];
    pts[i + 1] = {pts[i].x + seg_len * std::cos(theta), pts[i].y + seg_len * std::sin(theta)};
  }
  const double r = static_cast<double>(rec.thickness) / 2.0;
  double min_x = pts[0].x, max_x = pts[0].x, min_y = pts[0].y, max_y = pts[0].y;
  for (const auto& p : pts) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const detail::PixelBounds b = detail::clip_bounds(canvas, min_x, max_x, min_y, max_y, r + 1.0);
  if (b.empty) return;

  const std::size_t row_w = static_cast<std::size_t>(b.x1 - b.x0 + 1);
  std::vector<double> acc(row_w);
  constexpr int kRows = 16;
  for (std::ptrdiff_t y = b.y0; y <= b.y1; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int s = 0; s < kRows; ++s) {
      const double sy = static_cast<double>(y) + (s + 0.5) / kRows;
      std::array<detail::Interval, 4> ivs;
      std::size_t n_iv = 0;
      for (std::size_t seg = 0; seg < 4; ++seg) {
        detail::Interval iv;
        if (detail::capsule_slice(pts[seg].x, pts[seg].y, pts[seg + 1].x, pts[seg + 1].y, r, sy,
                                  iv))
          ivs[n_iv++] = iv;
      }
      if (n_iv == 0) continue;
      std::sort(ivs.begin(), ivs.begin() + n_iv,
                [](const detail::Interval& a, const detail::Interval& b2) { return a.lo < b2.lo; });
      // Merge and accumulate covered length per pixel.
      double lo = ivs[0].lo, hi = ivs[0].hi;
      auto flush = [&](double l, double h) {
        l = std::max(l, static_cast<double>(b.x0));
        h = std::min(h, static_cast<double>(b.x1 + 1));
        if (h <= l) return;
        std::ptrdiff_t px = static_cast<std::ptrdiff_t>(std::floor(l));
        for (; px < h; ++px) {
          const double seg_cov = std::min(h, static_cast<double>(px) + 1.0) -
                                 std::max(l, static_cast<double>(px));
          if (seg_cov > 0.0) acc[static_cast<std::size_t>(px - b.x0)] += seg_cov;
        }
      };
      for (std::size_t i = 1; i < n_iv; ++i) {
        if (ivs[i].lo <= hi) {
          hi = std::max(hi, ivs[i].hi);
        } else {
          flush(lo, hi);
          lo = ivs[i].lo;
          hi = ivs[i].hi;
        }
      }
      flush(lo, hi);
    }
    for (std::size_t i = 0; i < row_w; ++i) {
      const float cov = static_cast<float>(acc[i] / kRows);
      if (cov > 0.f)
        detail::composite_pixel(canvas, static_cast<std::size_t>(b.x0 + static_cast<std::ptrdiff_t>(i)),
                                static_cast<std::size_t>(y), rec.color, cov);
    }
  }
}

/// Coverage-compositing dispatch over all stroke primitives.
inline void draw_primitive(Image& canvas, const StrokeRecord& rec) {
  switch (rec.primitive) {
    case Primitive::capsule: draw_capsule(canvas, rec); break;
    case Primitive::diamond: draw_diamond(canvas, rec); break;
    case Primitive::wedge: draw_wedge(canvas, rec); break;
    case Primitive::polyline: draw_polyline(canvas, rec); break;
  }
}

/// Renders one patch: background fill, then strokes_per_patch strokes
/// sampled from rng and composited in order. Returns the 3xHxW image and
/// the stroke log. A translucent background color is pre-composited over
/// white so the returned image is fully opaque.
inline std::pair<Image, std::vector<StrokeRecord>> render_patch(const StrokeStyleSpec& spec,
                                                                Rng& rng) {
  Image canvas({3, static_cast<std::size_t>(spec.height), static_cast<std::size_t>(spec.width)});
  const Rgba& bg = spec.background;
  const float eff[3] = {bg.a * bg.r + (1.f - bg.a), bg.a * bg.g + (1.f - bg.a),
                        bg.a * bg.b + (1.f - bg.a)};
  for (std::size_t c = 0; c < 3; ++c) {
    float* p = canvas.data() + c * canvas.height() * canvas.width();
    std::fill(p, p + canvas.height() * canvas.width(), eff[c]);
  }
  std::vector<StrokeRecord> log;
  log.reserve(static_cast<std::size_t>(spec.strokes_per_patch));
  for (int i = 0; i < spec.strokes_per_patch; ++i) {
    StrokeRecord rec = sample_stroke(spec, rng);
    rec.order = static_cast<std::uint32_t>(i);
    draw_primitive(canvas, rec);
    log.push_back(rec);
  }
  return {std::move(canvas), std::move(log)};
}

}  // namespace strokepatch
