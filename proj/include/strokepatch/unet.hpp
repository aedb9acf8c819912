#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "strokepatch/common.hpp"
#include "strokepatch/parallel.hpp"
#include "strokepatch/rng.hpp"
#include "strokepatch/tensor.hpp"

namespace strokepatch {

/// Encoder/decoder architecture parameters. Channel width doubles per stage
/// down to base_channels * 2^depth at the bottleneck.
struct UNetConfig {
  int in_channels = 3;
  int out_channels = 3;
  int depth = 4;
  int base_channels = 64;
  double norm_epsilon = 1e-5;
};

inline void validate(const UNetConfig& c) {
  if (c.in_channels < 1 || c.out_channels < 1)
    throw ValueError("unet: channel counts must be >= 1");
  if (c.depth < 1) throw ValueError("unet: depth must be >= 1");
  if (c.base_channels < 1) throw ValueError("unet: base_channels must be >= 1");
  if (!(c.norm_epsilon > 0.0)) throw ValueError("unet: norm_epsilon must be > 0");
}

/// Architecture config plus named parameter tensors and their gradient
/// slots. Parameter names follow construction order and are stable across
/// save/load.
template <typename T>
struct ModelState {
  UNetConfig config;
  std::vector<std::string> names;
  std::unordered_map<std::string, Tensor<T>> params;
  std::unordered_map<std::string, Tensor<T>> grads;

  Tensor<T>& param(const std::string& name) { return params.at(name); }
  const Tensor<T>& param(const std::string& name) const { return params.at(name); }
  Tensor<T>& grad(const std::string& name) { return grads.at(name); }

  void zero_grads() {
    for (auto& [name, g] : grads) g.fill(T(0));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params) n += p.numel();
    return n;
  }
};

/// Name and shape of every parameter, in construction (= serialization)
/// order. Encoder stages come first, then the bottleneck, then decoder
/// stages from deepest to shallowest, then the 1x1 output head.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_layout(
    const UNetConfig& cfg) {
  validate(cfg);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> layout;
  const auto stage_ch = [&](int s) {
    return static_cast<std::size_t>(cfg.base_channels) << s;
  };
  auto add_block = [&](const std::string& prefix, const std::string& conv,
                       const std::string& norm, std::size_t cin, std::size_t cout,
                       std::size_t k) {
    layout.emplace_back(prefix + "." + conv + ".weight", std::vector<std::size_t>{cout, cin, k, k});
    layout.emplace_back(prefix + "." + conv + ".bias", std::vector<std::size_t>{cout});
    layout.emplace_back(prefix + "." + norm + ".gamma", std::vector<std::size_t>{cout});
    layout.emplace_back(prefix + "." + norm + ".beta", std::vector<std::size_t>{cout});
  };
  for (int s = 0; s < cfg.depth; ++s) {
    const std::size_t cin = s == 0 ? static_cast<std::size_t>(cfg.in_channels) : stage_ch(s - 1);
    const std::size_t cout = stage_ch(s);
    const std::string p = "enc" + std::to_string(s);
    add_block(p, "conv1", "norm1", cin, cout, 3);
    add_block(p, "conv2", "norm2", cout, cout, 3);
  }
  {
    const std::size_t cin = stage_ch(cfg.depth - 1);
    const std::size_t cout = stage_ch(cfg.depth);
    add_block("mid", "conv1", "norm1", cin, cout, 3);
    add_block("mid", "conv2", "norm2", cout, cout, 3);
  }
  for (int s = cfg.depth - 1; s >= 0; --s) {
    const std::size_t below = stage_ch(s + 1);
    const std::size_t here = stage_ch(s);
    const std::string p = "dec" + std::to_string(s);
    add_block(p, "up", "upnorm", below, here, 3);
    add_block(p, "conv1", "norm1", below, here, 3);  // concat(up, skip) has `below` channels
    add_block(p, "conv2", "norm2", here, here, 3);
  }
  layout.emplace_back("head.weight",
                      std::vector<std::size_t>{static_cast<std::size_t>(cfg.out_channels),
                                               static_cast<std::size_t>(cfg.base_channels), 1, 1});
  layout.emplace_back("head.bias",
                      std::vector<std::size_t>{static_cast<std::size_t>(cfg.out_channels)});
  return layout;
}

/// Constructs a model with He-style fan-in normal weights, zero biases,
/// and identity norm affines. Fully deterministic given the seed.
template <typename T = float>
ModelState<T> build_unet(const UNetConfig& cfg, std::uint64_t seed) {
  ModelState<T> m;
  m.config = cfg;
  Rng rng(seed, stream::kInit);
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    Tensor<T> t(shape);
    const bool is_weight = name.ends_with(".weight");
    const bool is_gamma = name.ends_with(".gamma");
    if (is_weight) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal() * sigma);
    } else if (is_gamma) {
      t.fill(T(1));
    }
    m.names.push_back(name);
    m.grads.emplace(name, Tensor<T>(shape));
    m.params.emplace(name, std::move(t));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Layer primitives
// ---------------------------------------------------------------------------

/// 3x3 (or generally odd-k) cross-correlation with zero padding k/2 and
/// stride 1; spatial dims are preserved.
template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (w.rank() != 4 || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
    throw ValueError("conv2d_same: weight must be (c_out, c_in, k, k) with odd k, got " +
                     w.shape_str());
  if (x.rank() != 3 || x.dim(0) != w.dim(1))
    throw ValueError("conv2d_same: input channels " +
                     std::to_string(x.rank() == 3 ? x.dim(0) : 0) + " do not match weight c_in " +
                     std::to_string(w.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != w.dim(0))
    throw ValueError("conv2d_same: bias dim must equal weight c_out " + std::to_string(w.dim(0)));

  const std::ptrdiff_t co_n = static_cast<std::ptrdiff_t>(w.dim(0));
  const std::ptrdiff_t ci_n = static_cast<std::ptrdiff_t>(w.dim(1));
  const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(w.dim(2));
  const std::ptrdiff_t pad = k / 2;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(x.dim(1));
  const std::ptrdiff_t wd = static_cast<std::ptrdiff_t>(x.dim(2));

  Tensor<T> out({static_cast<std::size_t>(co_n), static_cast<std::size_t>(h),
                 static_cast<std::size_t>(wd)});
  parallel_for(static_cast<std::size_t>(co_n), [&](std::size_t co) {
    T* oplane = out.data() + co * h * wd;
    std::fill(oplane, oplane + h * wd, bias[co]);
    const T* wbase = w.data() + co * ci_n * k * k;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      T* orow = oplane + y * wd;
      for (std::ptrdiff_t ci = 0; ci < ci_n; ++ci) {
        const T* iplane = x.data() + ci * h * wd;
        const T* wk = wbase + ci * k * k;
        for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const T* irow = iplane + sy * wd;
          for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
            const T wv = wk[ky * k + kx];
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pad - kx);
            const std::ptrdiff_t hi = std::min(wd, wd + pad - kx);
            const T* ishift = irow + kx - pad;
            for (std::ptrdiff_t xx = lo; xx < hi; ++xx) orow[xx] += wv * ishift[xx];
          }
        }
      }
    }
  });
  return out;
}

namespace detail {

/// Gradients of conv2d_same. gw/gb accumulate; gx is overwritten.
template <typename T>
void conv2d_same_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                          Tensor<T>* gx, Tensor<T>& gw, Tensor<T>& gb) {
  const std::ptrdiff_t co_n = static_cast<std::ptrdiff_t>(w.dim(0));
  const std::ptrdiff_t ci_n = static_cast<std::ptrdiff_t>(w.dim(1));
  const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(w.dim(2));
  const std::ptrdiff_t pad = k / 2;
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(x.dim(1));
  const std::ptrdiff_t wd = static_cast<std::ptrdiff_t>(x.dim(2));

  // Weight and bias gradients, owned per output channel. Row dot products
  // accumulate into a fixed 16-lane stripe so the sum order is independent
  // of vector width and worker count yet still SIMD-friendly.
  constexpr std::ptrdiff_t kLanes = 16;
  parallel_for(static_cast<std::size_t>(co_n), [&](std::size_t co) {
    const T* gplane = gy.data() + co * h * wd;
    {
      T lanes[kLanes] = {};
      const std::ptrdiff_t total = h * wd;
      std::ptrdiff_t i = 0;
      for (; i + kLanes <= total; i += kLanes)
        for (std::ptrdiff_t j = 0; j < kLanes; ++j) lanes[j] += gplane[i + j];
      for (; i < total; ++i) lanes[i - (total - total % kLanes)] += gplane[i];
      T acc = T(0);
      for (std::ptrdiff_t j = 0; j < kLanes; ++j) acc += lanes[j];
      gb[co] += acc;
    }
    T* gwbase = gw.data() + co * ci_n * k * k;
    for (std::ptrdiff_t ci = 0; ci < ci_n; ++ci) {
      const T* iplane = x.data() + ci * h * wd;
      for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
        for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
          T lanes[kLanes] = {};
          for (std::ptrdiff_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            const T* grow = gplane + y * wd;
            const T* irow = iplane + sy * wd + kx - pad;
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, pad - kx);
            const std::ptrdiff_t hi = std::min(wd, wd + pad - kx);
            std::ptrdiff_t xx = lo;
            for (; xx + kLanes <= hi; xx += kLanes)
              for (std::ptrdiff_t j = 0; j < kLanes; ++j) lanes[j] += grow[xx + j] * irow[xx + j];
            for (std::ptrdiff_t j = 0; xx < hi; ++xx, ++j) lanes[j] += grow[xx] * irow[xx];
          }
          T acc = T(0);
          for (std::ptrdiff_t j = 0; j < kLanes; ++j) acc += lanes[j];
          gwbase[(ci * k + ky) * k + kx] += acc;
        }
      }
    }
  });

  if (!gx) return;
  // Input gradient, owned per input channel.
  gx->fill(T(0));
  parallel_for(static_cast<std::size_t>(ci_n), [&](std::size_t ci) {
    T* gxplane = gx->data() + ci * h * wd;
    for (std::ptrdiff_t co = 0; co < co_n; ++co) {
      const T* gplane = gy.data() + co * h * wd;
      const T* wk = w.data() + (co * ci_n + ci) * k * k;
      for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
        for (std::ptrdiff_t iy = 0; iy < h; ++iy) {
          const std::ptrdiff_t gyy = iy + pad - ky;
          if (gyy < 0 || gyy >= h) continue;
          const T* grow = gplane + gyy * wd;
          T* gxrow = gxplane + iy * wd;
          for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
            const T wv = wk[ky * k + kx];
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, kx - pad);
            const std::ptrdiff_t hi = std::min(wd, wd + kx - pad);
            const T* gshift = grow + pad - kx;
            for (std::ptrdiff_t ix = lo; ix < hi; ++ix) gxrow[ix] += wv * gshift[ix];
          }
        }
      }
    }
  });
}

}  // namespace detail

/// Per-channel standardization over the spatial dims of a single instance
/// (population variance), followed by the learned affine.
template <typename T>
Tensor<T> instance_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          double eps) {
  if (x.rank() != 3) throw ValueError("instance_norm2d: expected (c,h,w) input");
  if (gamma.numel() != x.dim(0) || beta.numel() != x.dim(0))
    throw ValueError("instance_norm2d: affine dims must equal channel count");
  const std::size_t c = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  Tensor<T> out(x.shape());
  parallel_for(c, [&](std::size_t ch) {
    const T* src = x.data() + ch * plane;
    T* dst = out.data() + ch * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += static_cast<double>(src[i]);
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(src[i]) - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double istd = 1.0 / std::sqrt(var + eps);
    const T g = gamma[ch], b = beta[ch];
    const T m = static_cast<T>(mean), s = static_cast<T>(istd);
    for (std::size_t i = 0; i < plane; ++i) dst[i] = g * ((src[i] - m) * s) + b;
  });
  return out;
}

/// Mean over all elements of (y - target)^2. Accumulated in double.
template <typename T>
double mse_loss(const Tensor<T>& y, const Tensor<T>& target) {
  require_same_shape(y, target, "mse_loss");
  if (y.numel() == 0) throw ValueError("mse_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const double d = static_cast<double>(y[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(y.numel());
}

/// d(mse)/dy, scaled by loss_scale (e.g. 1/batch for batch means).
template <typename T>
Tensor<T> mse_loss_grad(const Tensor<T>& y, const Tensor<T>& target, double loss_scale = 1.0) {
  require_same_shape(y, target, "mse_loss_grad");
  Tensor<T> g(y.shape());
  const double c = 2.0 * loss_scale / static_cast<double>(y.numel());
  for (std::size_t i = 0; i < y.numel(); ++i)
    g[i] = static_cast<T>(c * (static_cast<double>(y[i]) - static_cast<double>(target[i])));
  return g;
}

// ---------------------------------------------------------------------------
// Forward recording and backward pass
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
struct BlockRecord {
  TensorPtr<T> input;    // conv input
  TensorPtr<T> xhat;     // normalized activations, pre-affine
  std::vector<T> invstd; // per channel
  TensorPtr<T> output;   // post-ReLU (backwards mask source)
};

template <typename T>
struct StageRecord {
  BlockRecord<T> up;  // decoder only
  BlockRecord<T> b1;
  BlockRecord<T> b2;
  Tensor<std::uint8_t> pool_idx;  // encoder only, argmax in {0,1,2,3}
};

template <typename T>
struct NormScratch {
  Tensor<T> xhat;
  std::vector<T> invstd;
};

/// conv -> instance norm -> ReLU. Records what backward needs when `rec` is
/// non-null.
template <typename T>
TensorPtr<T> conv_block_forward(const ModelState<T>& m, const std::string& conv,
                                const std::string& norm, const TensorPtr<T>& x,
                                BlockRecord<T>* rec) {
  auto y = std::make_shared<Tensor<T>>(
      conv2d_same(*x, m.param(conv + ".weight"), m.param(conv + ".bias")));
  const Tensor<T>& gamma = m.param(norm + ".gamma");
  const Tensor<T>& beta = m.param(norm + ".beta");
  const std::size_t c = y->dim(0);
  const std::size_t plane = y->dim(1) * y->dim(2);
  auto xhat = rec ? std::make_shared<Tensor<T>>(y->shape()) : nullptr;
  std::vector<T> invstd(rec ? c : 0);
  const double eps = m.config.norm_epsilon;
  parallel_for(c, [&](std::size_t ch) {
    T* p = y->data() + ch * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += static_cast<double>(p[i]);
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(p[i]) - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const T istd = static_cast<T>(1.0 / std::sqrt(var + eps));
    const T mu = static_cast<T>(mean);
    const T g = gamma[ch], b = beta[ch];
    T* xh = xhat ? xhat->data() + ch * plane : nullptr;
    if (xhat) invstd[ch] = istd;
    for (std::size_t i = 0; i < plane; ++i) {
      const T norm_v = (p[i] - mu) * istd;
      if (xh) xh[i] = norm_v;
      const T v = g * norm_v + b;
      p[i] = v > T(0) ? v : T(0);  // ReLU
    }
  });
  if (rec) {
    rec->input = x;
    rec->xhat = std::move(xhat);
    rec->invstd = std::move(invstd);
    rec->output = y;
  }
  return y;
}

/// Backward through ReLU + instance norm + conv. Accumulates parameter
/// grads; returns the input gradient (empty when compute_gx is false, for
/// the first layer). Consumes the record's tensors.
template <typename T>
Tensor<T> conv_block_backward(ModelState<T>& m, const std::string& conv, const std::string& norm,
                              BlockRecord<T>& rec, Tensor<T>&& gy, bool compute_gx = true) {
  const std::size_t c = gy.dim(0);
  const std::size_t plane = gy.dim(1) * gy.dim(2);
  const Tensor<T>& gamma = m.param(norm + ".gamma");
  Tensor<T>& ggamma = m.grad(norm + ".gamma");
  Tensor<T>& gbeta = m.grad(norm + ".beta");
  // ReLU mask, then norm backward, all in place on gy.
  parallel_for(c, [&](std::size_t ch) {
    T* g = gy.data() + ch * plane;
    const T* out = rec.output->data() + ch * plane;
    const T* xh = rec.xhat->data() + ch * plane;
    double sum_g = 0.0, sum_gx = 0.0, sum_beta = 0.0, sum_gamma = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (out[i] <= T(0)) g[i] = T(0);
      sum_beta += static_cast<double>(g[i]);
      sum_gamma += static_cast<double>(g[i]) * xh[i];
    }
    gbeta[ch] += static_cast<T>(sum_beta);
    ggamma[ch] += static_cast<T>(sum_gamma);
    const double gm = static_cast<double>(gamma[ch]);
    sum_g = sum_beta * gm;    // sum of h = gamma * g
    sum_gx = sum_gamma * gm;  // sum of h * xhat
    const double inv_n = 1.0 / static_cast<double>(plane);
    const double istd = static_cast<double>(rec.invstd[ch]);
    const double mean_h = sum_g * inv_n;
    const double mean_hx = sum_gx * inv_n;
    for (std::size_t i = 0; i < plane; ++i) {
      const double h = gm * static_cast<double>(g[i]);
      g[i] = static_cast<T>(istd * (h - mean_h - static_cast<double>(xh[i]) * mean_hx));
    }
  });
  rec.xhat.reset();
  rec.output.reset();
  Tensor<T> gx;
  if (compute_gx) gx = Tensor<T>(rec.input->shape());
  conv2d_same_backward(*rec.input, m.param(conv + ".weight"), gy, compute_gx ? &gx : nullptr,
                       m.grad(conv + ".weight"), m.grad(conv + ".bias"));
  rec.input.reset();
  return gx;
}

template <typename T>
std::pair<TensorPtr<T>, Tensor<std::uint8_t>> maxpool2x2(const Tensor<T>& x, bool record) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / 2, ow = w / 2;
  auto out = std::make_shared<Tensor<T>>(std::vector<std::size_t>{c, oh, ow});
  Tensor<std::uint8_t> idx;
  if (record) idx = Tensor<std::uint8_t>({c, oh, ow});
  parallel_for(c, [&](std::size_t ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const T* r0 = x.data() + (ch * h + 2 * oy) * w;
      const T* r1 = r0 + w;
      T* orow = out->data() + (ch * oh + oy) * ow;
      std::uint8_t* irow = record ? idx.data() + (ch * oh + oy) * ow : nullptr;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T v[4] = {r0[2 * ox], r0[2 * ox + 1], r1[2 * ox], r1[2 * ox + 1]};
        std::size_t best = 0;
        for (std::size_t i = 1; i < 4; ++i)
          if (v[i] > v[best]) best = i;
        orow[ox] = v[best];
        if (irow) irow[ox] = static_cast<std::uint8_t>(best);
      }
    }
  });
  return {out, std::move(idx)};
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& gy, const Tensor<std::uint8_t>& idx) {
  const std::size_t c = gy.dim(0), oh = gy.dim(1), ow = gy.dim(2);
  Tensor<T> gx({c, oh * 2, ow * 2});
  parallel_for(c, [&](std::size_t ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const T* grow = gy.data() + (ch * oh + oy) * ow;
      const std::uint8_t* irow = idx.data() + (ch * oh + oy) * ow;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t dy = irow[ox] >> 1, dx = irow[ox] & 1;
        gx.at(ch, 2 * oy + dy, 2 * ox + dx) = grow[ox];
      }
    }
  });
  return gx;
}

/// 2x bilinear upsample with half-pixel-center alignment.
template <typename T>
TensorPtr<T> upsample2x(const Tensor<T>& x) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h * 2, ow = w * 2;
  auto out = std::make_shared<Tensor<T>>(std::vector<std::size_t>{c, oh, ow});
  auto taps = [](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, T& f) {
    const double s = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    const double cl = std::clamp(s, 0.0, static_cast<double>(n - 1));
    const double fl = std::floor(cl);
    i0 = static_cast<std::size_t>(fl);
    i1 = std::min(i0 + 1, n - 1);
    f = static_cast<T>(cl - fl);
  };
  std::vector<std::size_t> x0(ow), x1(ow);
  std::vector<T> fx(ow);
  for (std::size_t o = 0; o < ow; ++o) taps(o, w, x0[o], x1[o], fx[o]);
  parallel_for(c, [&](std::size_t ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      std::size_t y0, y1;
      T fy;
      taps(oy, h, y0, y1, fy);
      const T* r0 = x.data() + (ch * h + y0) * w;
      const T* r1 = x.data() + (ch * h + y1) * w;
      T* orow = out->data() + (ch * oh + oy) * ow;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T top = r0[x0[ox]] + (r0[x1[ox]] - r0[x0[ox]]) * fx[ox];
        const T bot = r1[x0[ox]] + (r1[x1[ox]] - r1[x0[ox]]) * fx[ox];
        orow[ox] = top + (bot - top) * fy;
      }
    }
  });
  return out;
}

/// Transpose of upsample2x (scatter of the interpolation weights),
/// channel-owned for determinism.
template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& gy) {
  const std::size_t c = gy.dim(0), oh = gy.dim(1), ow = gy.dim(2);
  const std::size_t h = oh / 2, w = ow / 2;
  Tensor<T> gx({c, h, w});
  auto taps = [](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, T& f) {
    const double s = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    const double cl = std::clamp(s, 0.0, static_cast<double>(n - 1));
    const double fl = std::floor(cl);
    i0 = static_cast<std::size_t>(fl);
    i1 = std::min(i0 + 1, n - 1);
    f = static_cast<T>(cl - fl);
  };
  std::vector<std::size_t> x0(ow), x1(ow);
  std::vector<T> fx(ow);
  for (std::size_t o = 0; o < ow; ++o) taps(o, w, x0[o], x1[o], fx[o]);
  parallel_for(c, [&](std::size_t ch) {
    T* gplane = gx.data() + ch * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      std::size_t y0, y1;
      T fy;
      taps(oy, h, y0, y1, fy);
      const T* grow = gy.data() + (ch * oh + oy) * ow;
      T* g0 = gplane + y0 * w;
      T* g1 = gplane + y1 * w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T g = grow[ox];
        const T gtop = g * (T(1) - fy);
        const T gbot = g * fy;
        g0[x0[ox]] += gtop * (T(1) - fx[ox]);
        g0[x1[ox]] += gtop * fx[ox];
        g1[x0[ox]] += gbot * (T(1) - fx[ox]);
        g1[x1[ox]] += gbot * fx[ox];
      }
    }
  });
  return gx;
}

template <typename T>
TensorPtr<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  auto out = std::make_shared<Tensor<T>>(
      std::vector<std::size_t>{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.numel(), out->data());
  std::copy(b.data(), b.data() + b.numel(), out->data() + a.numel());
  return out;
}

}  // namespace detail

/// Activations retained by a recorded forward pass; consumed by backward.
template <typename T>
struct ForwardRecord {
  bool valid = false;
  std::vector<detail::StageRecord<T>> enc;
  detail::StageRecord<T> mid;
  std::vector<detail::StageRecord<T>> dec;  // execution order: deepest first
  detail::TensorPtr<T> head_input;
  detail::TensorPtr<T> output;  // post-sigmoid
};

namespace detail {

template <typename T>
Tensor<T> unet_apply(const ModelState<T>& m, const Tensor<T>& x, ForwardRecord<T>* rec) {
  const UNetConfig& cfg = m.config;
  if (x.rank() != 3 || x.dim(0) != static_cast<std::size_t>(cfg.in_channels))
    throw ValueError("forward: input must have " + std::to_string(cfg.in_channels) +
                     " channels, got " + x.shape_str());
  const std::size_t div = std::size_t{1} << cfg.depth;
  if (x.dim(1) % div != 0 || x.dim(2) % div != 0)
    throw ValueError("forward: spatial dims " + x.shape_str() + " must be divisible by 2^depth=" +
                     std::to_string(div) + "; use pad_to_multiple first");

  if (rec) {
    rec->enc.assign(static_cast<std::size_t>(cfg.depth), {});
    rec->dec.assign(static_cast<std::size_t>(cfg.depth), {});
    rec->mid = {};
  }

  auto cur = std::make_shared<Tensor<T>>(x);
  std::vector<TensorPtr<T>> skips(static_cast<std::size_t>(cfg.depth));
  for (int s = 0; s < cfg.depth; ++s) {
    const std::string p = "enc" + std::to_string(s);
    StageRecord<T>* sr = rec ? &rec->enc[static_cast<std::size_t>(s)] : nullptr;
    auto a1 = conv_block_forward(m, p + ".conv1", p + ".norm1", cur, sr ? &sr->b1 : nullptr);
    auto a2 = conv_block_forward(m, p + ".conv2", p + ".norm2", a1, sr ? &sr->b2 : nullptr);
    skips[static_cast<std::size_t>(s)] = a2;
    auto [pooled, idx] = maxpool2x2(*a2, rec != nullptr);
    if (sr) sr->pool_idx = std::move(idx);
    cur = pooled;
  }
  {
    StageRecord<T>* sr = rec ? &rec->mid : nullptr;
    auto a1 = conv_block_forward(m, "mid.conv1", "mid.norm1", cur, sr ? &sr->b1 : nullptr);
    cur = conv_block_forward(m, "mid.conv2", "mid.norm2", a1, sr ? &sr->b2 : nullptr);
  }
  for (int s = cfg.depth - 1; s >= 0; --s) {
    const std::string p = "dec" + std::to_string(s);
    StageRecord<T>* sr = rec ? &rec->dec[static_cast<std::size_t>(cfg.depth - 1 - s)] : nullptr;
    auto up = upsample2x(*cur);
    cur.reset();
    auto upb = conv_block_forward(m, p + ".up", p + ".upnorm", up, sr ? &sr->up : nullptr);
    up.reset();
    auto cat = concat_channels(*upb, *skips[static_cast<std::size_t>(s)]);
    upb.reset();
    skips[static_cast<std::size_t>(s)].reset();
    auto a1 = conv_block_forward(m, p + ".conv1", p + ".norm1", cat, sr ? &sr->b1 : nullptr);
    cat.reset();
    cur = conv_block_forward(m, p + ".conv2", p + ".norm2", a1, sr ? &sr->b2 : nullptr);
  }
  Tensor<T> z = conv2d_same(*cur, m.param("head.weight"), m.param("head.bias"));
  if (rec) rec->head_input = cur;
  cur.reset();
  // Sigmoid head; outputs clamped to the open interval at float resolution.
  const T lo = std::numeric_limits<T>::epsilon();
  const T hi = T(1) - lo;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const T v = z[i];
    T s;
    if (v >= T(0)) {
      const T e = std::exp(-v);
      s = T(1) / (T(1) + e);
    } else {
      const T e = std::exp(v);
      s = e / (T(1) + e);
    }
    z[i] = std::clamp(s, lo, hi);
  }
  if (rec) {
    rec->output = std::make_shared<Tensor<T>>(z);
    rec->valid = true;
  }
  return z;
}

}  // namespace detail

/// Inference forward pass: y = f(x), all outputs strictly inside (0,1).
template <typename T>
Tensor<T> forward(const ModelState<T>& m, const Tensor<T>& x) {
  return detail::unet_apply<T>(m, x, nullptr);
}

/// Forward pass that retains the activations backward needs.
template <typename T>
Tensor<T> forward(const ModelState<T>& m, const Tensor<T>& x, ForwardRecord<T>& rec) {
  return detail::unet_apply<T>(m, x, &rec);
}

/// Reverse-mode pass: accumulates d(loss)/d(param) into m.grads for every
/// parameter, given d(loss)/d(output). Consumes the record; a second call
/// without a fresh recorded forward is an error.
template <typename T>
void backward(ModelState<T>& m, ForwardRecord<T>& rec, const Tensor<T>& grad_output) {
  if (!rec.valid)
    throw ValueError("backward: no recorded forward pass (record is absent or already consumed)");
  rec.valid = false;
  const UNetConfig& cfg = m.config;
  require_same_shape(grad_output, *rec.output, "backward");

  // Sigmoid head.
  Tensor<T> g(grad_output.shape());
  {
    const Tensor<T>& y = *rec.output;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = grad_output[i] * y[i] * (T(1) - y[i]);
    rec.output.reset();
  }
  Tensor<T> gcur(rec.head_input->shape());
  detail::conv2d_same_backward(*rec.head_input, m.param("head.weight"), g, &gcur,
                               m.grad("head.weight"), m.grad("head.bias"));
  rec.head_input.reset();
  g = Tensor<T>();

  // Decoder stages, shallowest first (reverse of execution).
  std::vector<Tensor<T>> skip_grads(static_cast<std::size_t>(cfg.depth));
  for (int s = 0; s < cfg.depth; ++s) {
    const std::string p = "dec" + std::to_string(s);
    detail::StageRecord<T>& sr = rec.dec[static_cast<std::size_t>(cfg.depth - 1 - s)];
    Tensor<T> gcat = detail::conv_block_backward(
        m, p + ".conv1", p + ".norm1", sr.b1,
        detail::conv_block_backward(m, p + ".conv2", p + ".norm2", sr.b2, std::move(gcur)));
    // Re-split concat(up, skip).
    const std::size_t up_c = sr.up.output ? sr.up.output->dim(0) : gcat.dim(0) / 2;
    const std::size_t h = gcat.dim(1), w = gcat.dim(2);
    Tensor<T> gup({up_c, h, w});
    Tensor<T> gskip({gcat.dim(0) - up_c, h, w});
    std::copy(gcat.data(), gcat.data() + gup.numel(), gup.data());
    std::copy(gcat.data() + gup.numel(), gcat.data() + gcat.numel(), gskip.data());
    gcat = Tensor<T>();
    skip_grads[static_cast<std::size_t>(s)] = std::move(gskip);
    Tensor<T> gups =
        detail::conv_block_backward(m, p + ".up", p + ".upnorm", sr.up, std::move(gup));
    gcur = detail::upsample2x_backward(gups);
  }

  // Bottleneck.
  gcur = detail::conv_block_backward(
      m, "mid.conv1", "mid.norm1", rec.mid.b1,
      detail::conv_block_backward(m, "mid.conv2", "mid.norm2", rec.mid.b2, std::move(gcur)));

  // Encoder stages, deepest first; pool grad + skip grad merge at each.
  for (int s = cfg.depth - 1; s >= 0; --s) {
    const std::string p = "enc" + std::to_string(s);
    detail::StageRecord<T>& sr = rec.enc[static_cast<std::size_t>(s)];
    Tensor<T> gx = detail::maxpool2x2_backward(gcur, sr.pool_idx);
    sr.pool_idx = Tensor<std::uint8_t>();
    Tensor<T>& gskip = skip_grads[static_cast<std::size_t>(s)];
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gskip[i];
    gskip = Tensor<T>();
    Tensor<T> gb1 =
        detail::conv_block_backward(m, p + ".conv2", p + ".norm2", sr.b2, std::move(gx));
    gcur = detail::conv_block_backward(m, p + ".conv1", p + ".norm1", sr.b1, std::move(gb1),
                                       /*compute_gx=*/s != 0);
  }
}

}  // namespace strokepatch
