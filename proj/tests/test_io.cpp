#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include <png.h>

#include "strokepatch/patchset.hpp"
#include "strokepatch/png_io.hpp"
#include "strokepatch/rng.hpp"

using namespace strokepatch;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Minimal RGBA PNG writer for exercising the reader's alpha handling.
void write_rgba_png(const std::filesystem::path& path, std::size_t w, std::size_t h,
                    const std::vector<unsigned char>& rgba) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  REQUIRE(f != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(rgba.data() + y * w * 4));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

}  // namespace

TEST_CASE("8-bit aligned pixel values round trip exactly") {
  Image img({3, 9, 13});
  Rng r(1);
  for (auto& v : img.storage()) v = static_cast<float>(r.below(256)) / 255.f;
  const auto path = temp_path("sp_png_roundtrip.png");
  write_png(img, path.string());
  const Image back = read_png(path.string());
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.numel(); ++i) REQUIRE(back[i] == img[i]);
  std::filesystem::remove(path);
}

TEST_CASE("arbitrary values quantize to the nearest 8-bit level") {
  Image img({3, 4, 4});
  Rng r(2);
  for (auto& v : img.storage()) v = static_cast<float>(r.uniform());
  const auto path = temp_path("sp_png_quant.png");
  write_png(img, path.string());
  const Image back = read_png(path.string());
  for (std::size_t i = 0; i < img.numel(); ++i)
    REQUIRE(std::abs(back[i] - img[i]) <= 0.5f / 255.f + 1e-6f);
  std::filesystem::remove(path);
}

TEST_CASE("RGBA inputs are composited over white") {
  // 2x1: a half-transparent red pixel and a fully transparent pixel.
  const std::vector<unsigned char> rgba = {255, 0, 0, 128, 0, 255, 0, 0};
  const auto path = temp_path("sp_png_rgba.png");
  write_rgba_png(path, 2, 1, rgba);
  const Image img = read_png(path.string());
  REQUIRE(img.channels() == 3);
  const float a = 128.f / 255.f;
  REQUIRE(img.at(0, 0, 0) == Catch::Approx(a * 1.f + (1.f - a)).margin(1e-6));
  REQUIRE(img.at(1, 0, 0) == Catch::Approx(1.f - a).margin(1e-6));
  REQUIRE(img.at(0, 0, 1) == 1.f);  // fully transparent reads as white
  REQUIRE(img.at(1, 0, 1) == 1.f);
  REQUIRE(img.at(2, 0, 1) == 1.f);
  std::filesystem::remove(path);
}

TEST_CASE("unreadable or undecodable PNGs raise IoError") {
  REQUIRE_THROWS_AS(read_png("/nonexistent/path.png"), IoError);
  const auto path = temp_path("sp_png_bad.png");
  std::ofstream(path) << "this is not a png";
  REQUIRE_THROWS_AS(read_png(path.string()), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("patch directories carry PNGs plus a manifest") {
  StrokeStyleSpec spec = preset("wet_brush");
  spec.count = 3;
  spec.width = 24;
  spec.height = 24;
  spec.strokes_per_patch = 4;
  const auto dir = temp_path("sp_patchdir");
  std::filesystem::remove_all(dir);
  generate_patch_dir(spec, 11, dir);

  REQUIRE(std::filesystem::exists(dir / "patch_00000.png"));
  REQUIRE(std::filesystem::exists(dir / "patch_00002.png"));
  REQUIRE(std::filesystem::exists(dir / "manifest.json"));

  const Manifest m = load_manifest(dir);
  REQUIRE(m.seed == 11);
  REQUIRE(m.generator_version == kGeneratorVersion);
  REQUIRE(m.spec.count == 3);
  REQUIRE(m.spec.width == 24);

  DirectoryPatchSource source(dir);
  REQUIRE(source.size() == 3);
  const auto [expected, log] = render_patch_at(spec, 11, 1);
  const Image got = source.patch(1);
  REQUIRE(got.same_shape(expected));
  for (std::size_t i = 0; i < got.numel(); ++i)
    REQUIRE(std::abs(got[i] - expected[i]) <= 0.5f / 255.f + 1e-6f);
  std::filesystem::remove_all(dir);
}

TEST_CASE("patch directory generation is byte-deterministic") {
  StrokeStyleSpec spec = preset("letratape");
  spec.count = 2;
  spec.width = 32;
  spec.height = 32;
  const auto d1 = temp_path("sp_patchdir_a");
  const auto d2 = temp_path("sp_patchdir_b");
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  generate_patch_dir(spec, 17, d1);
  generate_patch_dir(spec, 17, d2);
  for (int i = 0; i < 2; ++i) {
    const auto name = patch_filename(static_cast<std::size_t>(i));
    REQUIRE(slurp(d1 / name) == slurp(d2 / name));
  }
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("missing patches are reported when opening a directory source") {
  StrokeStyleSpec spec = preset("wet_brush");
  spec.count = 2;
  spec.width = 16;
  spec.height = 16;
  spec.strokes_per_patch = 1;
  const auto dir = temp_path("sp_patchdir_missing");
  std::filesystem::remove_all(dir);
  generate_patch_dir(spec, 3, dir);
  std::filesystem::remove(dir / "patch_00001.png");
  REQUIRE_THROWS_AS(DirectoryPatchSource(dir), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifests with malformed specs are rejected") {
  const auto dir = temp_path("sp_patchdir_badmanifest");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "manifest.json") << "{\"spec\": {\"bogus_key\": 1}, \"seed\": 0}";
  REQUIRE_THROWS_AS(load_manifest(dir), ValueError);
  std::ofstream(dir / "manifest.json") << "not json";
  REQUIRE_THROWS_AS(load_manifest(dir), ValueError);
  std::filesystem::remove_all(dir);
}
