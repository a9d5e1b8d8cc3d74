#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sane/aggregators.hpp"
#include "sane/common.hpp"
#include "sane/tensor.hpp"

namespace sane {

// Checkpoints are a JSON manifest of names/shapes plus a flat binary of
// little-endian float64 values, written as <base>.json and <base>.bin.

inline void save_checkpoint(const NamedTensors& tensors,
                            const std::filesystem::path& base) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "sane-checkpoint-v1";
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    manifest["tensors"].push_back(entry);
  }
  {
    std::ofstream out(base.string() + ".json");
    out << manifest.dump(2) << '\n';
  }
  std::ofstream out(base.string() + ".bin", std::ios::binary);
  for (const auto& [name, t] : tensors) {
    for (double x : t.values()) {
      const auto u = std::bit_cast<std::uint64_t>(x);
      unsigned char bytes[8];
      for (int b = 0; b < 8; ++b)
        bytes[b] = static_cast<unsigned char>((u >> (8 * b)) & 0xff);
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
}

inline void load_checkpoint(const NamedTensors& tensors,
                            const std::filesystem::path& base) {
  const auto json_path = base.string() + ".json";
  const auto bin_path = base.string() + ".bin";
  SANE_REQUIRE(std::filesystem::exists(json_path),
               "load_checkpoint: missing file ", json_path);
  SANE_REQUIRE(std::filesystem::exists(bin_path),
               "load_checkpoint: missing file ", bin_path);
  nlohmann::json manifest;
  {
    std::ifstream in(json_path);
    in >> manifest;
  }
  const auto& entries = manifest["tensors"];
  SANE_REQUIRE(entries.size() == tensors.size(), "load_checkpoint: manifest has ",
               entries.size(), " tensors, model expects ", tensors.size());
  std::ifstream in(bin_path, std::ios::binary);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [name, t] = tensors[i];
    SANE_REQUIRE(entries[i]["name"] == name,
                 "load_checkpoint: tensor ", i, " is '",
                 entries[i]["name"].get<std::string>(), "', model expects '",
                 name, "'");
    const auto shape = entries[i]["shape"].get<Shape>();
    SANE_REQUIRE(shape == t.shape(), "load_checkpoint: '", name, "' has shape ",
                 shape_str(shape), ", model expects ", shape_str(t.shape()));
    for (double& x : const_cast<Tensor&>(t).values()) {
      unsigned char bytes[8];
      in.read(reinterpret_cast<char*>(bytes), 8);
      SANE_REQUIRE(in.good(), "load_checkpoint: ", bin_path, " truncated");
      std::uint64_t u = 0;
      for (int b = 0; b < 8; ++b)
        u |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      x = std::bit_cast<double>(u);
    }
  }
}

}  // namespace sane
