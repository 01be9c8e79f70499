#pragma once

// 8-bit RGB PNG files <-> 3 x H x W float tensors.
//
// Two value ranges are used: "unit" [0, 1] (metrics, files: v / 255) and
// "model" [-1, 1] (network input: v / 127.5 - 1). Writing quantises with
// round-half-up after clamping.

#include <filesystem>

#include "styleid/tensor.hpp"

namespace styleid {

/// Any PNG colour type is converted to RGB; alpha is composited on black.
TensorF read_png(const std::filesystem::path& path);

/// Expects a 3 x H x W tensor in unit range.
void write_png(const std::filesystem::path& path, const TensorF& image);

TensorF unit_to_model(const TensorF& image);
TensorF model_to_unit(const TensorF& image);

/// Quantises a unit-range image to 8 bits and back, as a PNG round trip would.
TensorF quantize8(const TensorF& image);

/// Bicubic (Keys, a = -0.5) resampling with clamped borders, pixel-centre
/// aligned. Returns the input unchanged when the size already matches.
TensorF resize_bicubic(const TensorF& image, int height, int width);

/// PSNR in dB for unit-range images; infinity when identical.
double psnr(const TensorF& a, const TensorF& b);

}  // namespace styleid
