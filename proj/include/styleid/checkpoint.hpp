#pragma once

// Binary checkpoint container, all integers little-endian:
//
//   8 bytes   magic "STYLEID\0"
//   u32       format version (1)
//   u32 + n   JSON architecture config (UNetConfig) plus optional metadata
//   u32       record count
//   records:  u32 name length, name bytes, u32 rank, rank x u32 dims,
//             product(dims) x f32 (IEEE-754 bits, little-endian)
//
// Records are written in name order, so save(load(f)) reproduces f.

#include <filesystem>

#include "json.hpp"
#include "styleid/unet.hpp"

namespace styleid {

void save_checkpoint(const std::filesystem::path& path, const UNetWeights<float>& weights,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  UNetWeights<float> weights;
  nlohmann::json metadata;
};

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);

inline UNetWeights<float> load_checkpoint(const std::filesystem::path& path) {
  return read_checkpoint(path).weights;
}

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

}  // namespace styleid
