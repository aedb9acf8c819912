#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "strokepatch/common.hpp"
#include "strokepatch/tensor.hpp"
#include "strokepatch/unet.hpp"

namespace strokepatch {

// Byte layout: magic "SPCK" | u32 LE format version | u32 LE header length |
// UTF-8 JSON header (config + metadata + ordered tensor directory) | raw
// little-endian float32 tensor data in directory order.
inline constexpr char kCheckpointMagic[4] = {'S', 'P', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

enum class CheckpointErrorCode {
  bad_magic,
  unsupported_version,
  truncated,
  directory_mismatch,
};

class CheckpointError : public std::runtime_error {
public:
  CheckpointError(CheckpointErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  CheckpointErrorCode code() const { return code_; }

private:
  CheckpointErrorCode code_;
};

struct CheckpointMeta {
  std::string style;
  std::uint64_t seed = 0;
  int epochs_completed = 0;
  double final_loss = 0.0;
};

/// The serialized model: enough to reproduce inference exactly.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  UNetConfig config;
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

namespace detail {

inline nlohmann::json config_to_json(const UNetConfig& c) {
  return {{"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"depth", c.depth},
          {"base_channels", c.base_channels},
          {"norm_epsilon", c.norm_epsilon}};
}

inline UNetConfig config_from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  c.depth = j.at("depth").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.norm_epsilon = j.at("norm_epsilon").get<double>();
  return c;
}

}  // namespace detail

inline void save_checkpoint(const ModelState<float>& model, const CheckpointMeta& meta,
                            const std::string& path) {
  nlohmann::json header;
  header["config"] = detail::config_to_json(model.config);
  header["meta"] = {{"style", meta.style},
                    {"seed", meta.seed},
                    {"epochs_completed", meta.epochs_completed},
                    {"final_loss", meta.final_loss}};
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& name : model.names) {
    const Tensor<float>& t = model.param(name);
    dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel() * sizeof(float);
  }
  header["tensors"] = std::move(dir);
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint32_t header_len = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&header_len), 4);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& name : model.names) {
    const Tensor<float>& t = model.param(name);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw IoError("write failure on checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 12)
    throw CheckpointError(CheckpointErrorCode::truncated, "checkpoint shorter than its header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError(CheckpointErrorCode::bad_magic,
                          "not a checkpoint file (bad magic bytes)");
  std::uint32_t version = 0, header_len = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&header_len, bytes.data() + 8, 4);
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorCode::unsupported_version,
                          "unsupported checkpoint format version " + std::to_string(version));
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len))
    throw CheckpointError(CheckpointErrorCode::truncated, "checkpoint header is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorCode::directory_mismatch,
                          std::string("unreadable checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  ck.version = version;
  try {
    ck.config = detail::config_from_json(header.at("config"));
    const auto& meta = header.at("meta");
    ck.meta.style = meta.value("style", std::string{});
    ck.meta.seed = meta.value("seed", std::uint64_t{0});
    ck.meta.epochs_completed = meta.value("epochs_completed", 0);
    ck.meta.final_loss = meta.value("final_loss", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorCode::directory_mismatch,
                          std::string("malformed checkpoint header: ") + e.what());
  }

  const auto expected = parameter_layout(ck.config);
  const auto& dir = header.at("tensors");
  if (!dir.is_array() || dir.size() != expected.size())
    throw CheckpointError(CheckpointErrorCode::directory_mismatch,
                          "tensor directory does not match the architecture");

  const char* data = bytes.data() + 12 + header_len;
  const std::size_t data_size = bytes.size() - 12 - header_len;
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& entry = dir[i];
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t entry_offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<std::vector<std::size_t>>();
      entry_offset = entry.at("offset").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(CheckpointErrorCode::directory_mismatch,
                            std::string("malformed tensor directory: ") + e.what());
    }
    if (name != expected[i].first || shape != expected[i].second || entry_offset != offset)
      throw CheckpointError(CheckpointErrorCode::directory_mismatch,
                            "tensor directory entry '" + name +
                                "' does not match the expected layout");
    Tensor<float> t(shape);
    const std::size_t nbytes = t.numel() * sizeof(float);
    if (offset + nbytes > data_size)
      throw CheckpointError(CheckpointErrorCode::truncated,
                            "checkpoint data ends before tensor '" + name + "'");
    std::memcpy(t.data(), data + offset, nbytes);
    offset += nbytes;
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (offset != data_size)
    throw CheckpointError(CheckpointErrorCode::truncated,
                          "checkpoint data size does not match the tensor directory");
  return ck;
}

/// Rebuilds a runnable model from a loaded checkpoint.
inline ModelState<float> model_from_checkpoint(const Checkpoint& ck) {
  ModelState<float> m;
  m.config = ck.config;
  for (const auto& [name, tensor] : ck.tensors) {
    m.names.push_back(name);
    m.grads.emplace(name, Tensor<float>(tensor.shape()));
    m.params.emplace(name, tensor);
  }
  return m;
}

}  // namespace strokepatch
