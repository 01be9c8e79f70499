#pragma once

// Value-level tensor kernels. Every function here is pure: it reads its
// operands and returns a fresh tensor. The taped wrappers in autodiff.hpp
// call these for the forward pass and the *_backward kernels for the
// reverse pass.
//
// Layout conventions: images and feature maps are C x H x W, token
// matrices are rows x features, conv weights are Cout x Cin x k x k.
// Reductions run sequentially over the innermost index; GEMMs go through
// Eigen's single-threaded kernels, so results are bit-reproducible.

#include "styleid/tensor.hpp"

namespace styleid {

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a);

/// Row-wise softmax, stabilised by subtracting the row max. Sums accumulate in double.
template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> softmax_rows_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_y);

/// Cross-correlation of a C_in x H x W map with a C_out x C_in x k x k kernel.
/// Output size is (H + 2*pad - k) / stride + 1 and must be integral.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, int stride, int pad);

template <typename Scalar>
struct Conv2dGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                    const Tensor<Scalar>& grad_y, int stride, int pad);

/// Group normalisation over C x H x W with per-channel affine parameters.
template <typename Scalar>
Tensor<Scalar> group_norm(const Tensor<Scalar>& x, int groups, const Tensor<Scalar>& scale,
                          const Tensor<Scalar>& shift, double eps);

template <typename Scalar>
struct GroupNormGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> scale;
  Tensor<Scalar> shift;
};

template <typename Scalar>
GroupNormGrads<Scalar> group_norm_backward(const Tensor<Scalar>& x, int groups,
                                           const Tensor<Scalar>& scale, double eps,
                                           const Tensor<Scalar>& grad_y);

/// Affine map y = x W^T + b. `x` is n x in (or a length-in vector), W is out x in.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> silu(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> silu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_y);

template <typename Scalar>
Tensor<Scalar> upsample_nearest2x(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> upsample_nearest2x_backward(const Tensor<Scalar>& grad_y);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor);

/// Adds a per-channel value to every spatial position of a C x H x W map.
template <typename Scalar>
Tensor<Scalar> add_channel(const Tensor<Scalar>& x, const Tensor<Scalar>& bias);

/// Sums a C x H x W map over its spatial axes.
template <typename Scalar>
Tensor<Scalar> sum_spatial(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> mean_squared_error(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

}  // namespace styleid
