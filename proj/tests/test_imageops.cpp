#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "strokepatch/imageops.hpp"
#include "strokepatch/rng.hpp"

using namespace strokepatch;

namespace {

Image random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed,
                   double lo = 0.0, double hi = 1.0) {
  Image img({c, h, w});
  Rng r(seed);
  for (auto& v : img.storage()) v = static_cast<float>(r.uniform(lo, hi));
  return img;
}

bool bytes_equal(const Image& a, const Image& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("add_noise with zero sigma or kind none is the exact identity") {
  const Image img = random_image(3, 17, 23, 1);
  Rng rng(2);
  REQUIRE(bytes_equal(add_noise(img, {NoiseKind::gaussian, 0.f}, rng), img));
  REQUIRE(bytes_equal(add_noise(img, {NoiseKind::none, 123.f}, rng), img));
}

TEST_CASE("extreme gaussian noise saturates most of a mid-gray image") {
  // sigma = 500/255 ~ 1.961; saturation probability 2*Phi(-0.5/sigma) ~ 0.799.
  Image img({1, 1000, 1000}, 0.5f);
  Rng rng(3);
  const Image out = add_noise(img, {NoiseKind::gaussian, 500.f}, rng);
  std::size_t saturated = 0;
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (out[i] == 0.f || out[i] == 1.f) ++saturated;
  const double frac = static_cast<double>(saturated) / static_cast<double>(out.numel());
  REQUIRE(frac > 0.6);
  const double sigma = 500.0 / 255.0;
  const double expected = 2.0 * normal_cdf(-0.5 / sigma);
  REQUIRE(frac == Catch::Approx(expected).margin(0.005));
}

TEST_CASE("gaussian noise scale: sigma_8bit 25.5 gives sample std 0.1") {
  Image img({1, 1000, 1000}, 0.5f);
  Rng rng(4);
  const Image out = add_noise(img, {NoiseKind::gaussian, 25.5f}, rng);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double d = static_cast<double>(out[i]) - 0.5;
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(out.numel());
  const double std_dev = std::sqrt(sq / n - (sum / n) * (sum / n));
  REQUIRE(std_dev >= 0.099);
  REQUIRE(std_dev <= 0.101);
}

TEST_CASE("uniform noise stays within its half-range") {
  Image img({1, 200, 200}, 0.5f);
  Rng rng(5);
  const Image out = add_noise(img, {NoiseKind::uniform, 51.f}, rng);  // range 0.2
  for (std::size_t i = 0; i < out.numel(); ++i) {
    REQUIRE(out[i] >= 0.3f - 1e-6f);
    REQUIRE(out[i] <= 0.7f + 1e-6f);
  }
}

TEST_CASE("noise is drawn from per-channel substreams") {
  // Channel c's noise comes from rng.split(c), independent of the other
  // channels' draws, which is what makes noise commute with channel
  // permutation in distribution.
  const Image img = random_image(3, 9, 11, 6);
  Rng rng(7);
  const NoiseSpec spec{NoiseKind::gaussian, 25.f};
  const Image out = add_noise(img, spec, rng);
  const double scale = 25.0 / 255.0;
  for (std::size_t c = 0; c < 3; ++c) {
    Rng sub = rng.split(c);
    for (std::size_t y = 0; y < img.height(); ++y) {
      for (std::size_t x = 0; x < img.width(); ++x) {
        const double expect =
            std::clamp(static_cast<double>(img.at(c, y, x)) + sub.normal() * scale, 0.0, 1.0);
        REQUIRE(out.at(c, y, x) == Catch::Approx(expect).margin(0.0));
      }
    }
  }
}

TEST_CASE("blur kernel invariants") {
  const BlurKernel k = make_blur_kernel(5.f);
  REQUIRE(k.half() == 8);  // ceil(3 * 2.5)
  double sum = 0.0;
  for (double w : k.weights) {
    REQUIRE(w >= 0.0);
    sum += w;
  }
  REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
  for (int i = 0; i <= k.half(); ++i)
    REQUIRE(k.weights[static_cast<std::size_t>(k.half() - i)] ==
            k.weights[static_cast<std::size_t>(k.half() + i)]);
  REQUIRE_THROWS_AS(make_blur_kernel(-1.f), ValueError);
}

TEST_CASE("blur of a constant image is the same constant") {
  Image img({3, 20, 20}, 0.37f);
  const Image out = gaussian_blur(img, 5.f);
  for (std::size_t i = 0; i < out.numel(); ++i)
    REQUIRE(out[i] == Catch::Approx(0.37).margin(1e-6));
}

TEST_CASE("blur with radius zero is bit-identical") {
  const Image img = random_image(3, 13, 17, 8);
  REQUIRE(bytes_equal(gaussian_blur(img, 0.f), img));
}

TEST_CASE("impulse response matches the sampled 2-D gaussian") {
  Image img({1, 31, 31}, 0.f);
  img.at(0, 15, 15) = 1.f;
  const Image out = gaussian_blur(img, 5.f);

  // Taps evaluated independently: sigma = 2.5, halfwidth ceil(3 sigma) = 8.
  const double sigma = 2.5;
  const int half = 8;
  std::vector<double> taps(static_cast<std::size_t>(2 * half + 1));
  double norm = 0.0;
  for (int i = -half; i <= half; ++i) {
    taps[static_cast<std::size_t>(i + half)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    norm += taps[static_cast<std::size_t>(i + half)];
  }
  for (double& t : taps) t /= norm;

  for (std::size_t y = 0; y < 31; ++y) {
    for (std::size_t x = 0; x < 31; ++x) {
      const int dy = static_cast<int>(y) - 15, dx = static_cast<int>(x) - 15;
      const double expect =
          (std::abs(dy) <= half && std::abs(dx) <= half)
              ? taps[static_cast<std::size_t>(dy + half)] * taps[static_cast<std::size_t>(dx + half)]
              : 0.0;
      REQUIRE(out.at(0, y, x) == Catch::Approx(expect).margin(1e-6));
    }
  }
}

TEST_CASE("blur is linear on unconstrained buffers") {
  const Image x = random_image(1, 24, 24, 9, -2.0, 2.0);
  const Image y = random_image(1, 24, 24, 10, -2.0, 2.0);
  Image mix(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) mix[i] = 0.7f * x[i] + 0.3f * y[i];
  const Image bx = gaussian_blur(x, 4.f);
  const Image by = gaussian_blur(y, 4.f);
  const Image bmix = gaussian_blur(mix, 4.f);
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE(bmix[i] == Catch::Approx(0.7 * bx[i] + 0.3 * by[i]).margin(1e-5));
}

TEST_CASE("blur preserves the mean of constant-extended images") {
  // Random interior, constant margin wider than the kernel halfwidth, so the
  // reflected border reproduces the constant exactly.
  Image img({1, 40, 40}, 0.3f);
  Rng r(11);
  for (std::size_t y = 9; y < 31; ++y)
    for (std::size_t x = 9; x < 31; ++x) img.at(0, y, x) = static_cast<float>(r.uniform());
  const Image out = gaussian_blur(img, 5.f);
  double mean_in = 0.0, mean_out = 0.0;
  for (std::size_t i = 0; i < img.numel(); ++i) {
    mean_in += img[i];
    mean_out += out[i];
  }
  mean_in /= static_cast<double>(img.numel());
  mean_out /= static_cast<double>(img.numel());
  REQUIRE(std::abs(mean_in - mean_out) < 1e-4);
}

TEST_CASE("resize with factor 1 is bit-identical") {
  const Image img = random_image(3, 15, 22, 12);
  REQUIRE(bytes_equal(resize(img, 1.0), img));
}

TEST_CASE("downscaling a constant image preserves the constant") {
  Image img({1, 2, 2}, 0.42f);
  const Image out = resize(img, 0.5);
  REQUIRE(out.height() == 1);
  REQUIRE(out.width() == 1);
  REQUIRE(out.at(0, 0, 0) == Catch::Approx(0.42).margin(1e-7));
}

TEST_CASE("ramp upscale matches the half-pixel-center bilinear closed form") {
  Image img({1, 1, 4});
  const float ramp[4] = {0.f, 1.f / 3.f, 2.f / 3.f, 1.f};
  for (std::size_t x = 0; x < 4; ++x) img.at(0, 0, x) = ramp[x];
  const Image out = resize(img, 2.0);
  REQUIRE(out.width() == 8);
  REQUIRE(out.height() == 2);
  for (std::size_t ox = 0; ox < 8; ++ox) {
    double s = (ox + 0.5) * 0.5 - 0.5;
    s = std::clamp(s, 0.0, 3.0);
    const std::size_t x0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t x1 = std::min<std::size_t>(x0 + 1, 3);
    const double f = s - std::floor(s);
    const double expect = ramp[x0] + (ramp[x1] - ramp[x0]) * f;
    REQUIRE(out.at(0, 0, ox) == Catch::Approx(expect).margin(1e-6));
    REQUIRE(out.at(0, 1, ox) == Catch::Approx(expect).margin(1e-6));
  }
}

TEST_CASE("degenerate resize targets are an error") {
  const Image img = random_image(1, 4, 4, 13);
  REQUIRE_THROWS_AS(resize(img, 0.01), ValueError);
  REQUIRE_THROWS_AS(resize(img, -1.0), ValueError);
  REQUIRE_THROWS_AS(resize(img, 0.0), ValueError);
}

TEST_CASE("pad_to_multiple leaves aligned images unchanged") {
  const Image img = random_image(3, 400, 400, 14);
  auto [padded, dims] = pad_to_multiple(img, 16);
  REQUIRE(bytes_equal(padded, img));
  REQUIRE(dims == Dims{400, 400});
}

TEST_CASE("pad_to_multiple reflects without repeating the edge") {
  Image img({1, 3, 5});
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 5; ++x) img.at(0, y, x) = static_cast<float>(10 * y + x);
  auto [padded, dims] = pad_to_multiple(img, 4);
  REQUIRE(padded.height() == 4);
  REQUIRE(padded.width() == 8);
  REQUIRE(dims == Dims{3, 5});
  // Hand-built reflect oracle: row 3 mirrors row 1; columns 5,6,7 mirror 3,2,1.
  const std::size_t reflect_row[4] = {0, 1, 2, 1};
  const std::size_t reflect_col[8] = {0, 1, 2, 3, 4, 3, 2, 1};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      REQUIRE(padded.at(0, y, x) == img.at(0, reflect_row[y], reflect_col[x]));
}

TEST_CASE("crop undoes pad_to_multiple byte-exactly") {
  const Image img = random_image(3, 13, 21, 15);
  auto [padded, dims] = pad_to_multiple(img, 8);
  REQUIRE(bytes_equal(crop(padded, dims), img));
}

TEST_CASE("crop to full size is bit-identical and sub-crop is a sub-array") {
  const Image img = random_image(2, 10, 12, 16);
  REQUIRE(bytes_equal(crop(img, {10, 12}), img));
  const Image sub = crop(img, {4, 7});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 7; ++x) REQUIRE(sub.at(c, y, x) == img.at(c, y, x));
  REQUIRE_THROWS_AS(crop(img, {11, 12}), ValueError);
}

TEST_CASE("pad_to_multiple rejects bad arguments") {
  const Image img = random_image(1, 4, 4, 17);
  REQUIRE_THROWS_AS(pad_to_multiple(img, 0), ValueError);
}
