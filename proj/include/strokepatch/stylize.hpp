#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "strokepatch/common.hpp"
#include "strokepatch/imageops.hpp"
#include "strokepatch/tensor.hpp"
#include "strokepatch/unet.hpp"

namespace strokepatch {

/// Applies the trained model to an arbitrary image. For scale_factor r < 1
/// the image is reduced, stylized and enlarged back to the exact input
/// dimensions, which coarsens the apparent stroke size; r == 1 skips both
/// resizes and is plain padded inference.
inline Image stylize(const ModelState<float>& model, const Image& image, double scale_factor) {
  if (!(scale_factor > 0.0) || scale_factor > 1.0)
    throw ValueError("stylize: scale factor must lie in (0, 1]");
  const std::size_t div = std::size_t{1} << model.config.depth;

  if (scale_factor == 1.0) {
    auto [padded, dims] = pad_to_multiple(image, div);
    return crop(forward(model, padded), dims);
  }

  const auto reduced_dim = [scale_factor](std::size_t d) {
    return static_cast<std::size_t>(
        std::max<long long>(0, std::llround(static_cast<double>(d) * scale_factor)));
  };
  const std::size_t rh = reduced_dim(image.height());
  const std::size_t rw = reduced_dim(image.width());
  if (rh < div || rw < div)
    throw ValueError("stylize: reduced image " + std::to_string(rw) + "x" + std::to_string(rh) +
                     " is smaller than 2^depth=" + std::to_string(div) +
                     "; use a larger scale factor");
  const Image reduced = resize_to(image, rh, rw);
  auto [padded, dims] = pad_to_multiple(reduced, div);
  const Image styled = crop(forward(model, padded), dims);
  return resize_to(styled, image.height(), image.width());
}

}  // namespace strokepatch
