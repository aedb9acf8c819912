#pragma once

#include <stdexcept>
#include <string>

namespace strokepatch {

// Version stamped into patch-set manifests and reported by the CLI.
inline constexpr const char* kGeneratorVersion = "0.1.0";

/// Invalid argument / violated precondition.
class ValueError : public std::runtime_error {
public:
  explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem or encoding failure.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace strokepatch
