#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

#include "strokepatch/common.hpp"
#include "strokepatch/tensor.hpp"
#include "strokepatch/unet.hpp"

namespace strokepatch {

/// Per-parameter first/second moment estimates and the global step count.
template <typename T>
struct AdamState {
  std::unordered_map<std::string, Tensor<T>> m;
  std::unordered_map<std::string, Tensor<T>> v;
  std::int64_t step = 0;
};

template <typename T>
AdamState<T> make_adam_state(const ModelState<T>& model) {
  AdamState<T> s;
  for (const auto& name : model.names) {
    const auto& shape = model.param(name).shape();
    s.m.emplace(name, Tensor<T>(shape));
    s.v.emplace(name, Tensor<T>(shape));
  }
  return s;
}

/// One Adam update over every model parameter:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Non-finite gradients abort the run, naming the offending parameter.
template <typename T>
void adam_step(ModelState<T>& model, AdamState<T>& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (const auto& name : model.names) {
    Tensor<T>& p = model.params.at(name);
    const Tensor<T>& g = model.grads.at(name);
    Tensor<T>& m = state.m.at(name);
    Tensor<T>& v = state.v.at(name);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i])))
        throw ValueError("adam_step: non-finite gradient in parameter '" + name + "'");
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace strokepatch
