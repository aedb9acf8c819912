#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "strokepatch/common.hpp"
#include "strokepatch/parallel.hpp"
#include "strokepatch/png_io.hpp"
#include "strokepatch/raster.hpp"
#include "strokepatch/rng.hpp"
#include "strokepatch/style.hpp"

namespace strokepatch {

/// An ordered set of rendered stroke patches plus its generation identity.
/// Immutable after construction; regenerating with the same (spec, seed)
/// yields byte-identical patches.
struct PatchSet {
  StrokeStyleSpec spec;
  std::uint64_t seed = 0;
  std::vector<Image> patches;
  std::optional<std::vector<std::vector<StrokeRecord>>> stroke_logs;
};

/// Renders patch `index` of the set identified by (spec, seed). Every index
/// has its own derived generator, so patches can be produced in any order
/// or concurrently with identical results.
inline std::pair<Image, std::vector<StrokeRecord>> render_patch_at(const StrokeStyleSpec& spec,
                                                                   std::uint64_t seed,
                                                                   std::uint64_t index) {
  Rng rng = Rng(seed, stream::kPatch).split(index);
  return render_patch(spec, rng);
}

inline PatchSet generate_patch_set(const StrokeStyleSpec& spec, std::uint64_t seed,
                                   bool keep_logs = false) {
  validate(spec);
  PatchSet set;
  set.spec = spec;
  set.seed = seed;
  const std::size_t n = static_cast<std::size_t>(spec.count);
  set.patches.resize(n);
  if (keep_logs) set.stroke_logs.emplace(n);
  parallel_for(n, [&](std::size_t i) {
    auto [img, log] = render_patch_at(spec, seed, i);
    set.patches[i] = std::move(img);
    if (keep_logs) (*set.stroke_logs)[i] = std::move(log);
  });
  return set;
}

// ---------------------------------------------------------------------------
// Patch providers. Training iterates patches through this interface so
// full-size patch sets can stream from disk instead of being held in
// memory.
// ---------------------------------------------------------------------------

class PatchSource {
public:
  virtual ~PatchSource() = default;
  virtual std::size_t size() const = 0;
  virtual Image patch(std::size_t index) const = 0;
  virtual const StrokeStyleSpec& spec() const = 0;
};

class MemoryPatchSource final : public PatchSource {
public:
  explicit MemoryPatchSource(PatchSet set) : set_(std::move(set)) {}

  std::size_t size() const override { return set_.patches.size(); }
  Image patch(std::size_t index) const override { return set_.patches.at(index); }
  const StrokeStyleSpec& spec() const override { return set_.spec; }

private:
  PatchSet set_;
};

// ---------------------------------------------------------------------------
// On-disk layout: a directory of patch_{index:05}.png files (8-bit RGB)
// plus manifest.json recording spec, seed and generator version.
// ---------------------------------------------------------------------------

inline std::string patch_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "patch_%05zu.png", index);
  return buf;
}

inline void write_manifest(const StrokeStyleSpec& spec, std::uint64_t seed,
                           const std::filesystem::path& dir) {
  nlohmann::json j;
  j["spec"] = to_json(spec);
  j["seed"] = seed;
  j["generator_version"] = kGeneratorVersion;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
  out << j.dump(2) << "\n";
}

struct Manifest {
  StrokeStyleSpec spec;
  std::uint64_t seed = 0;
  std::string generator_version;
};

inline Manifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValueError("manifest: invalid JSON in '" + path.string() + "': " + e.what());
  }
  Manifest m;
  if (!j.contains("spec")) throw ValueError("manifest: missing 'spec'");
  m.spec = style_from_json(j.at("spec"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.generator_version = j.value("generator_version", std::string{});
  return m;
}

/// Writes a rendered patch set to disk (PNGs + manifest).
inline void write_patch_dir(const PatchSet& set, const std::filesystem::path& dir,
                            int compression_level = 6) {
  std::filesystem::create_directories(dir);
  parallel_for(set.patches.size(), [&](std::size_t i) {
    write_png(set.patches[i], (dir / patch_filename(i)).string(), compression_level);
  });
  write_manifest(set.spec, set.seed, dir);
}

/// Renders and writes a patch set without materializing it in memory.
inline void generate_patch_dir(const StrokeStyleSpec& spec, std::uint64_t seed,
                               const std::filesystem::path& dir, int compression_level = 6) {
  validate(spec);
  std::filesystem::create_directories(dir);
  parallel_for(static_cast<std::size_t>(spec.count), [&](std::size_t i) {
    auto [img, log] = render_patch_at(spec, seed, i);
    (void)log;
    write_png(img, (dir / patch_filename(i)).string(), compression_level);
  });
  write_manifest(spec, seed, dir);
}

/// Streams patches from a generated directory, decoding on demand.
class DirectoryPatchSource final : public PatchSource {
public:
  explicit DirectoryPatchSource(std::filesystem::path dir)
      : dir_(std::move(dir)), manifest_(load_manifest(dir_)) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(manifest_.spec.count); ++i) {
      if (!std::filesystem::exists(dir_ / patch_filename(i)))
        throw IoError("patch directory '" + dir_.string() + "' is missing " + patch_filename(i));
    }
  }

  std::size_t size() const override { return static_cast<std::size_t>(manifest_.spec.count); }
  Image patch(std::size_t index) const override {
    return read_png((dir_ / patch_filename(index)).string());
  }
  const StrokeStyleSpec& spec() const override { return manifest_.spec; }
  const Manifest& manifest() const { return manifest_; }

private:
  std::filesystem::path dir_;
  Manifest manifest_;
};

}  // namespace strokepatch
