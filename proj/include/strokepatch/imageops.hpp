#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "strokepatch/common.hpp"
#include "strokepatch/parallel.hpp"
#include "strokepatch/rng.hpp"
#include "strokepatch/style.hpp"
#include "strokepatch/tensor.hpp"

namespace strokepatch {

namespace detail {

/// Mirror an index into [0, n) without repeating the edge sample
/// (-1 -> 1, n -> n-2).
inline std::ptrdiff_t fold_reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i = i % period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return i;
}

}  // namespace detail

/// Adds the spec's corruption noise and clamps to [0,1]. Each channel draws
/// from its own substream (rng.split(channel)) in row-major order, so the
/// noise attached to a channel index does not depend on how many channels
/// precede it.
inline Image add_noise(const Image& img, const NoiseSpec& spec, const Rng& rng) {
  Image out = img;
  if (spec.kind == NoiseKind::none || spec.sigma_8bit == 0.f) return out;
  const double scale = static_cast<double>(spec.sigma_8bit) / 255.0;
  const std::size_t c = img.channels();
  const std::size_t plane = img.height() * img.width();
  parallel_for(c, [&](std::size_t ch) {
    Rng sub = rng.split(ch);
    float* p = out.data() + ch * plane;
    if (spec.kind == NoiseKind::gaussian) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = static_cast<double>(p[i]) + sub.normal() * scale;
        p[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    } else {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = static_cast<double>(p[i]) + sub.uniform(-scale, scale);
        p[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  });
  return out;
}

/// 1-D Gaussian taps for a blur of the given radius. The kernel standard
/// deviation is radius/2, truncated at ceil(3*sigma) and normalized.
struct BlurKernel {
  float radius = 0.f;
  std::vector<double> weights;  // symmetric, index 0 .. 2*half, center at half

  int half() const { return static_cast<int>(weights.size() / 2); }
};

inline BlurKernel make_blur_kernel(float radius) {
  if (radius < 0.f) throw ValueError("gaussian_blur: radius must be >= 0");
  BlurKernel k;
  k.radius = radius;
  if (radius == 0.f) {
    k.weights = {1.0};
    return k;
  }
  const double sigma = static_cast<double>(radius) / 2.0;
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  k.weights.resize(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    k.weights[static_cast<std::size_t>(i + half)] = w;
    sum += w;
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

/// Separable Gaussian blur with reflected borders (mirror without repeating
/// the edge pixel), applied per channel. radius == 0 is the identity.
inline Image gaussian_blur(const Image& img, float radius) {
  const BlurKernel kernel = make_blur_kernel(radius);
  if (radius == 0.f) return img;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(img.height());
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(img.width());
  const int half = kernel.half();
  const double* taps = kernel.weights.data();

  Image tmp(img.shape());
  const std::size_t rows = img.channels() * img.height();
  // Horizontal pass.
  parallel_for(rows, [&](std::size_t r) {
    const std::size_t c = r / img.height();
    const std::size_t y = r % img.height();
    const float* src = img.row(c, y);
    float* dst = tmp.row(c, y);
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -half; t <= half; ++t) {
        acc += taps[t + half] * src[detail::fold_reflect(x + t, w)];
      }
      dst[x] = static_cast<float>(acc);
    }
  });
  // Vertical pass.
  Image out(img.shape());
  parallel_for(rows, [&](std::size_t r) {
    const std::size_t c = r / img.height();
    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(r % img.height());
    float* dst = out.row(c, static_cast<std::size_t>(y));
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -half; t <= half; ++t) {
        acc += taps[t + half] *
               tmp.at(c, static_cast<std::size_t>(detail::fold_reflect(y + t, h)), static_cast<std::size_t>(x));
      }
      dst[x] = static_cast<float>(acc);
    }
  });
  return out;
}

/// Bilinear resample to explicit output dimensions with half-pixel-center
/// alignment.
inline Image resize_to(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h < 1 || out_w < 1) throw ValueError("resize: degenerate output dimensions");
  if (out_h == img.height() && out_w == img.width()) return img;
  const std::size_t c = img.channels();
  const std::size_t in_h = img.height();
  const std::size_t in_w = img.width();
  Image out({c, out_h, out_w});
  const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);

  std::vector<std::size_t> x0(out_w), x1(out_w);
  std::vector<double> fx(out_w);
  for (std::size_t x = 0; x < out_w; ++x) {
    double s = (static_cast<double>(x) + 0.5) * sx - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_w - 1));
    const double fl = std::floor(s);
    x0[x] = static_cast<std::size_t>(fl);
    x1[x] = std::min(x0[x] + 1, in_w - 1);
    fx[x] = s - fl;
  }
  parallel_for(c * out_h, [&](std::size_t r) {
    const std::size_t ch = r / out_h;
    const std::size_t y = r % out_h;
    double s = (static_cast<double>(y) + 0.5) * sy - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_h - 1));
    const double fl = std::floor(s);
    const std::size_t y0 = static_cast<std::size_t>(fl);
    const std::size_t y1 = std::min(y0 + 1, in_h - 1);
    const double fy = s - fl;
    const float* r0 = img.row(ch, y0);
    const float* r1 = img.row(ch, y1);
    float* dst = out.row(ch, y);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double top = r0[x0[x]] + (r0[x1[x]] - r0[x0[x]]) * fx[x];
      const double bot = r1[x0[x]] + (r1[x1[x]] - r1[x0[x]]) * fx[x];
      dst[x] = static_cast<float>(top + (bot - top) * fy);
    }
  });
  return out;
}

/// Spatial scaling operator: output dims are round(dim * factor).
/// factor == 1 returns an exact copy.
inline Image resize(const Image& img, double factor) {
  if (!(factor > 0.0)) throw ValueError("resize: factor must be > 0");
  if (factor == 1.0) return img;
  const auto round_dim = [factor](std::size_t d) {
    return static_cast<std::size_t>(
        std::max<long long>(0, std::llround(static_cast<double>(d) * factor)));
  };
  const std::size_t oh = round_dim(img.height());
  const std::size_t ow = round_dim(img.width());
  if (oh < 1 || ow < 1) throw ValueError("resize: degenerate output dimensions");
  return resize_to(img, oh, ow);
}

struct Dims {
  std::size_t height = 0;
  std::size_t width = 0;

  bool operator==(const Dims&) const = default;
};

/// Reflect-pads right/bottom so both spatial dims become multiples of m.
/// Returns the padded image and the original dims for later cropping.
inline std::pair<Image, Dims> pad_to_multiple(const Image& img, std::size_t m) {
  if (m < 1) throw ValueError("pad_to_multiple: m must be >= 1");
  if (img.height() < 1 || img.width() < 1) throw ValueError("pad_to_multiple: empty image");
  const Dims orig{img.height(), img.width()};
  const std::size_t h = (img.height() + m - 1) / m * m;
  const std::size_t w = (img.width() + m - 1) / m * m;
  if (h == img.height() && w == img.width()) return {img, orig};
  Image out({img.channels(), h, w});
  const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(img.height());
  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(img.width());
  parallel_for(img.channels() * h, [&](std::size_t r) {
    const std::size_t c = r / h;
    const std::size_t y = r % h;
    const std::size_t sy =
        static_cast<std::size_t>(detail::fold_reflect(static_cast<std::ptrdiff_t>(y), ih));
    const float* src = img.row(c, sy);
    float* dst = out.row(c, y);
    for (std::size_t x = 0; x < w; ++x) {
      dst[x] = src[detail::fold_reflect(static_cast<std::ptrdiff_t>(x), iw)];
    }
  });
  return {std::move(out), orig};
}

/// Top-left crop to the given dims.
inline Image crop(const Image& img, Dims dims) {
  if (dims.height > img.height() || dims.width > img.width())
    throw ValueError("crop: requested dims exceed image size");
  if (dims.height == img.height() && dims.width == img.width()) return img;
  Image out({img.channels(), dims.height, dims.width});
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < dims.height; ++y) {
      const float* src = img.row(c, y);
      std::copy(src, src + dims.width, out.row(c, y));
    }
  }
  return out;
}

}  // namespace strokepatch
