#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "styleid/unet.hpp"

namespace test {

/// A small U-Net with the same topology as the default one: three levels,
/// attention at the two lower resolutions and the bottleneck.
inline styleid::UNetConfig tiny_config() {
  styleid::UNetConfig c;
  c.resolution = 16;
  c.base_channels = 8;
  c.channel_mult = {1, 1, 2};
  c.attention_resolutions = {8, 4};
  c.groups = 4;
  c.time_embed_dim = 16;
  return c;
}

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("styleid_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace test
