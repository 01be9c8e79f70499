#pragma once

// Content fidelity (CFSD) and colour transfer (RGB-uv histogram loss)
// metrics. Images are 3 x H x W RGB in [0, 1]; all reductions run in double.

#include "styleid/tensor.hpp"

namespace styleid {

/// Patch features: the luma of each non-overlapping patch x patch block,
/// flattened row-major, mean-subtracted and L2-normalised (left at zero when
/// the block is flat). Rows follow block raster order. Result: blocks x patch^2.
template <typename Scalar>
TensorD extract_patch_features(const Tensor<Scalar>& image, int patch = 8);

/// Row-wise softmax of F F^T.
TensorD correlation_map(const TensorD& features);

/// Mean over rows i of KL(S^c_i || S^cs_i) between the correlation maps of
/// the two images' patch features. Not symmetric.
template <typename Scalar>
double cfsd(const Tensor<Scalar>& content, const Tensor<Scalar>& stylized, int patch = 8);

/// Same, from precomputed features.
double cfsd_from_features(const TensorD& content, const TensorD& stylized);

struct HistogramOptions {
  int bins = 64;
  double eps = 1e-6;
  double uv_limit = 3.0;  ///< u, v clipped to [-limit, limit]; bin centres span the same range
  double falloff = 0.02;  ///< inverse-quadratic kernel 1 / (1 + (d / falloff)^2) per axis
};

/// Intensity-weighted log-chroma histogram, stored as 3 x bins x bins (plane
/// R, G, B; u along rows, v along columns) and normalised to total mass 1.
/// Plane R uses u = log((R+eps)/(G+eps)), v = log((R+eps)/(B+eps)); G pairs
/// with (R, B) and B with (R, G). An all-black image has no weight and
/// yields the uniform histogram plus a warning.
template <typename Scalar>
TensorD rgb_uv_histogram(const Tensor<Scalar>& image, const HistogramOptions& options = {});

/// Hellinger distance (1/sqrt 2) ||sqrt(a) - sqrt(b)||, in [0, 1]. Throws
/// NormalizationError unless both inputs are nonnegative with unit mass.
double histogram_loss(const TensorD& a, const TensorD& b);

}  // namespace styleid
