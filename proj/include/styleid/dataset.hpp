#pragma once

// Procedural stand-ins for photo and painting collections. Content images
// are 2-4 flat-coloured shapes on a plain background; style images are
// global textures drawn from a fixed three-colour palette. Generation is a
// pure function of the spec.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "styleid/tensor.hpp"

namespace styleid {

using Rgb8 = std::array<std::uint8_t, 3>;
using Palette = std::array<Rgb8, 3>;

/// The fixed palette table style images draw from.
const std::vector<Palette>& style_palettes();

enum class StyleFamily { Stripes, Checker, NoiseGrain, Stippling };

const char* to_string(StyleFamily family);

struct Image8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  ///< interleaved, row-major

  Rgb8 pixel(int y, int x) const;
  /// 3 x H x W in [0, 1].
  TensorF to_unit() const;
};

struct ProceduralSpec {
  std::uint64_t seed = 20240101;
  int resolution = 64;
  int content_train = 1024;
  int style_train = 1024;
  int content_val = 8;
  int style_val = 8;
};

struct DatasetItem {
  std::string name;
  Image8 image;
  /// Style images only.
  StyleFamily family = StyleFamily::Stripes;
  int palette = -1;
};

struct Dataset {
  std::vector<DatasetItem> content_train, content_val, style_train, style_val;
};

Dataset generate_dataset(const ProceduralSpec& spec);

/// Single images, addressable by (seed, split, index) so that any one image
/// can be regenerated without the rest of the set.
DatasetItem generate_content(std::uint64_t seed, int index, int resolution);
DatasetItem generate_style(std::uint64_t seed, int index, int resolution);

/// Writes content/{train,val}/*.png, style/{train,val}/*.png and manifest.json.
void write_dataset(const Dataset& data, const ProceduralSpec& spec, const std::filesystem::path& root);

void to_json(nlohmann::json& j, const ProceduralSpec& s);
void from_json(const nlohmann::json& j, ProceduralSpec& s);

}  // namespace styleid
