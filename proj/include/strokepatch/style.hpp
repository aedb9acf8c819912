#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "strokepatch/common.hpp"

namespace strokepatch {

struct Rgba {
  float r = 0.f, g = 0.f, b = 0.f, a = 1.f;

  bool operator==(const Rgba&) const = default;
};

inline constexpr Rgba kWhite{1.f, 1.f, 1.f, 1.f};
inline constexpr Rgba kBlack{0.f, 0.f, 0.f, 1.f};

enum class NoiseKind { none, gaussian, uniform };

/// Additive corruption noise. Magnitudes are kept in 8-bit intensity units
/// (0-255 scale) and divided by 255 where the noise is applied.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  float sigma_8bit = 0.f;

  bool operator==(const NoiseSpec&) const = default;
};

enum class Primitive { capsule, diamond, wedge, polyline };

enum class ColorMode { random_rgb, fixed };

/// Full parameterization of one stroke-patch style.
struct StrokeStyleSpec {
  std::string name;
  int width = 400;
  int height = 400;
  int count = 5000;
  Rgba background = kWhite;
  Primitive primitive = Primitive::capsule;
  int strokes_per_patch = 50;
  float stroke_length = 80.f;
  float stroke_thickness = 40.f;
  ColorMode color_mode = ColorMode::random_rgb;
  Rgba stroke_color = kBlack;  // used when color_mode == fixed
  float opacity = 1.f;
  NoiseSpec noise;
  float noise_probability = 0.f;
};

inline bool channels_in_unit_range(const Rgba& c) {
  auto ok = [](float v) { return v >= 0.f && v <= 1.f; };
  return ok(c.r) && ok(c.g) && ok(c.b) && ok(c.a);
}

inline void validate(const StrokeStyleSpec& s) {
  if (s.width < 1 || s.height < 1) throw ValueError("style: width and height must be >= 1");
  if (s.count < 1) throw ValueError("style: count must be >= 1");
  if (s.strokes_per_patch < 0) throw ValueError("style: strokes_per_patch must be >= 0");
  if (s.stroke_length < 0.f) throw ValueError("style: stroke_length must be >= 0");
  if (s.stroke_thickness < 1.f)
    throw ValueError("style: stroke_thickness must be >= 1 (sub-pixel strokes rejected)");
  if (s.opacity < 0.f || s.opacity > 1.f) throw ValueError("style: opacity must lie in [0,1]");
  if (!channels_in_unit_range(s.background) || !channels_in_unit_range(s.stroke_color))
    throw ValueError("style: color channels must lie in [0,1]");
  if (s.noise.sigma_8bit < 0.f) throw ValueError("style: noise sigma must be >= 0");
  if (s.noise_probability < 0.f || s.noise_probability > 1.f)
    throw ValueError("style: noise_probability must lie in [0,1]");
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

struct PresetInfo {
  std::string name;
  bool published_params;  // carries the originally published generator parameters
};

inline std::vector<PresetInfo> preset_catalog() {
  return {
      {"wet_brush", true},        {"rough_silverpoint", true}, {"fine_silverpoint", true},
      {"letratape", true},        {"smooth_brush", true},      {"speedball_pen", false},
      {"diamond_brush", false},   {"cuneiform_brush", false},  {"scribble_pencil", false},
  };
}

/// Returns the fully-populated spec for a named preset. Unknown names raise
/// a ValueError that lists the available presets.
inline StrokeStyleSpec preset(const std::string& name) {
  StrokeStyleSpec s;
  s.name = name;
  if (name == "wet_brush") {
    s.primitive = Primitive::capsule;
    s.strokes_per_patch = 50;
    s.stroke_length = 80.f;
    s.stroke_thickness = 40.f;
    s.color_mode = ColorMode::random_rgb;
    s.noise = {NoiseKind::gaussian, 500.f};
    s.noise_probability = 1.f;
    return s;
  }
  if (name == "rough_silverpoint" || name == "fine_silverpoint" || name == "letratape") {
    s.primitive = Primitive::capsule;
    s.color_mode = ColorMode::fixed;
    s.stroke_color = kBlack;
    s.stroke_length = 50.f;
    s.stroke_thickness = 1.f;
    s.strokes_per_patch = 700;
    s.noise = {NoiseKind::none, 0.f};
    if (name == "fine_silverpoint") s.strokes_per_patch = 1200;
    if (name == "letratape") {
      s.strokes_per_patch = 200;
      s.stroke_thickness = 5.f;
    }
    return s;
  }
  if (name == "smooth_brush") {
    s.primitive = Primitive::capsule;
    s.strokes_per_patch = 50;
    s.stroke_length = 120.f;
    s.stroke_thickness = 40.f;
    s.color_mode = ColorMode::random_rgb;
    s.noise = {NoiseKind::gaussian, 500.f};
    s.noise_probability = 1.f;
    return s;
  }
  // Approximate looks with no published parameterization; the values below
  // are this project's invention.
  if (name == "speedball_pen") {
    s.primitive = Primitive::capsule;
    s.strokes_per_patch = 300;
    s.stroke_length = 60.f;
    s.stroke_thickness = 6.f;
    s.color_mode = ColorMode::fixed;
    s.stroke_color = kBlack;
    s.noise = {NoiseKind::none, 0.f};
    return s;
  }
  if (name == "diamond_brush") {
    s.primitive = Primitive::diamond;
    s.strokes_per_patch = 250;
    s.stroke_length = 56.f;
    s.stroke_thickness = 22.f;
    s.color_mode = ColorMode::random_rgb;
    s.noise = {NoiseKind::none, 0.f};
    return s;
  }
  if (name == "cuneiform_brush") {
    s.primitive = Primitive::wedge;
    s.strokes_per_patch = 220;
    s.stroke_length = 48.f;
    s.stroke_thickness = 16.f;
    s.color_mode = ColorMode::fixed;
    s.stroke_color = {0.12f, 0.08f, 0.05f, 1.f};
    s.noise = {NoiseKind::none, 0.f};
    return s;
  }
  if (name == "scribble_pencil") {
    s.primitive = Primitive::polyline;
    s.strokes_per_patch = 400;
    s.stroke_length = 90.f;
    s.stroke_thickness = 2.f;
    s.color_mode = ColorMode::fixed;
    s.stroke_color = {0.15f, 0.15f, 0.15f, 1.f};
    s.opacity = 0.85f;
    s.noise = {NoiseKind::none, 0.f};
    return s;
  }
  std::string avail;
  for (const auto& p : preset_catalog()) avail += (avail.empty() ? "" : ", ") + p.name;
  throw ValueError("unknown preset '" + name + "'; available presets: " + avail);
}

// ---------------------------------------------------------------------------
// JSON serialization. Strict schema: unknown keys are an error; colors are
// 4-element arrays of 8-bit integers, divided by 255 on load.
// ---------------------------------------------------------------------------

namespace detail {

inline const char* to_string(Primitive p) {
  switch (p) {
    case Primitive::capsule: return "capsule";
    case Primitive::diamond: return "diamond";
    case Primitive::wedge: return "wedge";
    case Primitive::polyline: return "polyline";
  }
  return "capsule";
}

inline Primitive primitive_from_string(const std::string& s) {
  if (s == "capsule") return Primitive::capsule;
  if (s == "diamond") return Primitive::diamond;
  if (s == "wedge") return Primitive::wedge;
  if (s == "polyline") return Primitive::polyline;
  throw ValueError("style: unknown primitive '" + s + "'");
}

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::uniform: return "uniform";
  }
  return "none";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "none") return NoiseKind::none;
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "uniform") return NoiseKind::uniform;
  throw ValueError("style: unknown noise kind '" + s + "'");
}

inline nlohmann::json color_to_json(const Rgba& c) {
  auto q = [](float v) { return static_cast<int>(std::nearbyint(v * 255.f)); };
  return nlohmann::json::array({q(c.r), q(c.g), q(c.b), q(c.a)});
}

inline Rgba color_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 4)
    throw ValueError("style: '" + key + "' must be a 4-element array of 8-bit integers");
  float v[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number_integer())
      throw ValueError("style: '" + key + "' channels must be integers");
    const std::int64_t c = j[i].get<std::int64_t>();
    if (c < 0 || c > 255)
      throw ValueError("style: '" + key + "' channels must lie in [0,255]");
    v[i] = static_cast<float>(c) / 255.f;
  }
  return {v[0], v[1], v[2], v[3]};
}

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return it.key() == k; }) == known.end()) {
      throw ValueError("style: unknown key '" + it.key() + "' in " + where);
    }
  }
}

}  // namespace detail

inline nlohmann::json to_json(const StrokeStyleSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["width"] = s.width;
  j["height"] = s.height;
  j["count"] = s.count;
  j["background"] = detail::color_to_json(s.background);
  j["primitive"] = detail::to_string(s.primitive);
  j["strokes_per_patch"] = s.strokes_per_patch;
  j["stroke_length"] = s.stroke_length;
  j["stroke_thickness"] = s.stroke_thickness;
  j["color_mode"] = s.color_mode == ColorMode::random_rgb ? "random_rgb" : "fixed";
  j["stroke_color"] = detail::color_to_json(s.stroke_color);
  j["opacity"] = s.opacity;
  j["noise"] = {{"kind", detail::to_string(s.noise.kind)}, {"sigma_8bit", s.noise.sigma_8bit}};
  j["noise_probability"] = s.noise_probability;
  return j;
}

inline StrokeStyleSpec style_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValueError("style: document must be a JSON object");
  detail::reject_unknown_keys(
      j,
      {"name", "width", "height", "count", "background", "primitive", "strokes_per_patch",
       "stroke_length", "stroke_thickness", "color_mode", "stroke_color", "opacity", "noise",
       "noise_probability"},
      "style spec");
  StrokeStyleSpec s;
  try {
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("width")) s.width = j.at("width").get<int>();
    if (j.contains("height")) s.height = j.at("height").get<int>();
    if (j.contains("count")) s.count = j.at("count").get<int>();
    if (j.contains("background")) s.background = detail::color_from_json(j.at("background"), "background");
    if (j.contains("primitive"))
      s.primitive = detail::primitive_from_string(j.at("primitive").get<std::string>());
    if (j.contains("strokes_per_patch")) s.strokes_per_patch = j.at("strokes_per_patch").get<int>();
    if (j.contains("stroke_length")) s.stroke_length = j.at("stroke_length").get<float>();
    if (j.contains("stroke_thickness")) s.stroke_thickness = j.at("stroke_thickness").get<float>();
    if (j.contains("color_mode")) {
      const std::string m = j.at("color_mode").get<std::string>();
      if (m == "random_rgb") {
        s.color_mode = ColorMode::random_rgb;
      } else if (m == "fixed") {
        s.color_mode = ColorMode::fixed;
      } else {
        throw ValueError("style: unknown color_mode '" + m + "'");
      }
    }
    if (j.contains("stroke_color")) s.stroke_color = detail::color_from_json(j.at("stroke_color"), "stroke_color");
    if (j.contains("opacity")) s.opacity = j.at("opacity").get<float>();
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      detail::reject_unknown_keys(n, {"kind", "sigma_8bit"}, "noise spec");
      if (n.contains("kind")) s.noise.kind = detail::noise_kind_from_string(n.at("kind").get<std::string>());
      if (n.contains("sigma_8bit")) s.noise.sigma_8bit = n.at("sigma_8bit").get<float>();
    }
    if (j.contains("noise_probability")) s.noise_probability = j.at("noise_probability").get<float>();
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("style: malformed value: ") + e.what());
  }
  validate(s);
  return s;
}

inline StrokeStyleSpec load_style(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open style spec '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValueError("style: invalid JSON in '" + path + "': " + e.what());
  }
  return style_from_json(j);
}

inline void save_style(const StrokeStyleSpec& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write style spec '" + path + "'");
  out << to_json(s).dump(2) << "\n";
}

}  // namespace strokepatch
