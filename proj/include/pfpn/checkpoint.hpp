#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pfpn/model.hpp"

namespace pfpn {

namespace detail {

constexpr char kCheckpointMagic[8] = {'P', 'F', 'P', 'N', 'C', 'K', 'P', 'T'};

template <typename Scalar>
const char* dtype_name() {
  return sizeof(Scalar) == 4 ? "f32" : "f64";
}

}  // namespace detail

/// Single-file archive: model config, every named parameter tensor, every
/// normalization statistic, and the training-step counter. Values are stored
/// as raw little-endian scalars, so a save/load round trip is bit-exact.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, PfpnNet<Scalar>& net,
                     std::int64_t step) {
  nlohmann::json header;
  header["version"] = 1;
  header["dtype"] = detail::dtype_name<Scalar>();
  header["step"] = step;
  header["config"] = net.config;

  std::vector<std::pair<std::string, const VecX<Scalar>*>> tensors;
  for (const auto& p : net.params()) tensors.emplace_back(p.name, p.value);
  for (const auto& s : net.stats()) tensors.emplace_back(s.name, s.value);

  std::uint64_t offset = 0;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, vec] : tensors) {
    index.push_back({{"name", name},
                     {"count", vec->size()},
                     {"offset", offset}});
    offset += static_cast<std::uint64_t>(vec->size()) * sizeof(Scalar);
  }
  header["tensors"] = index;

  const std::string hdr = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + path.string());
  }
  out.write(detail::kCheckpointMagic, 8);
  const std::uint64_t hdr_len = hdr.size();
  out.write(reinterpret_cast<const char*>(&hdr_len), sizeof(hdr_len));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  for (const auto& [name, vec] : tensors) {
    out.write(reinterpret_cast<const char*>(vec->data()),
              static_cast<std::streamsize>(vec->size() * sizeof(Scalar)));
  }
  if (!out) throw std::runtime_error("short write: " + path.string());
}

struct CheckpointMeta {
  ModelConfig config;
  std::int64_t step = 0;
};

/// Rebuilds the network recorded in the file. Throws ConfigError when the
/// file targets a different scalar width or its tensors do not match the
/// architecture named in its own config.
template <typename Scalar>
CheckpointMeta load_checkpoint(const std::filesystem::path& path,
                               PfpnNet<Scalar>& net) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
    throw ConfigError("not a checkpoint file: " + path.string());
  }
  std::uint64_t hdr_len = 0;
  in.read(reinterpret_cast<char*>(&hdr_len), sizeof(hdr_len));
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  if (!in) throw ConfigError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt checkpoint header (" + std::string(e.what()) +
                      "): " + path.string());
  }
  const std::string dtype = header.at("dtype").get<std::string>();
  if (dtype != detail::dtype_name<Scalar>()) {
    throw ConfigError("checkpoint dtype " + dtype + " does not match this " +
                      std::string(detail::dtype_name<Scalar>()) + " build: " +
                      path.string());
  }
  CheckpointMeta meta;
  meta.config = header.at("config").get<ModelConfig>();
  meta.step = header.at("step").get<std::int64_t>();

  net = PfpnNet<Scalar>(meta.config);
  std::unordered_map<std::string, VecX<Scalar>*> by_name;
  for (const auto& p : net.params()) by_name[p.name] = p.value;
  for (const auto& s : net.stats()) by_name[s.name] = s.value;

  const std::streampos payload_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::int64_t count = entry.at("count").get<std::int64_t>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ConfigError("checkpoint tensor '" + name +
                        "' has no slot in the configured model: " +
                        path.string());
    }
    if (it->second->size() != count) {
      throw ConfigError("checkpoint tensor '" + name + "' has " +
                        std::to_string(count) + " values, model expects " +
                        std::to_string(it->second->size()) + ": " +
                        path.string());
    }
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(it->second->data()),
            static_cast<std::streamsize>(count * sizeof(Scalar)));
    if (!in) throw ConfigError("truncated checkpoint payload: " + path.string());
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw ConfigError("checkpoint is missing tensor '" +
                      by_name.begin()->first + "': " + path.string());
  }
  return meta;
}

}  // namespace pfpn
