#include "styleid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "styleid/warnings.hpp"

namespace styleid {
namespace {

using MatrixD = RowMatrix<double>;

template <typename Scalar>
void check_rgb(const Tensor<Scalar>& image, const char* who) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError(std::string(who) + ": expected 3 x H x W image, got " + shape_string(image.shape()));
  }
}

/// Row-wise log-softmax of F F^T.
MatrixD log_correlation(const TensorD& features) {
  const auto f = features.matrix();
  MatrixD m = f * f.transpose();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    const double lse = mx + std::log((m.row(i).array() - mx).exp().sum());
    m.row(i).array() -= lse;
  }
  return m;
}

}  // namespace

template <typename Scalar>
TensorD extract_patch_features(const Tensor<Scalar>& image, int patch) {
  check_rgb(image, "patch features");
  const int h = image.dim(1);
  const int w = image.dim(2);
  if (patch < 1 || h % patch || w % patch) {
    throw ShapeError("patch features: " + std::to_string(h) + "x" + std::to_string(w) +
                     " image is not a whole number of " + std::to_string(patch) + "-pixel patches");
  }
  const auto px = image.data();
  const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  const int rows = (h / patch) * (w / patch);
  const int cols = patch * patch;
  MatrixD f(rows, cols);
  int r = 0;
  for (int by = 0; by < h; by += patch) {
    for (int bx = 0; bx < w; bx += patch, ++r) {
      int c = 0;
      for (int y = by; y < by + patch; ++y) {
        for (int x = bx; x < bx + patch; ++x, ++c) {
          const auto i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
          f(r, c) = 0.299 * px[i] + 0.587 * px[plane + i] + 0.114 * px[2 * plane + i];
        }
      }
      f.row(r).array() -= f.row(r).mean();
      const double norm = f.row(r).norm();
      if (norm > 0) f.row(r) /= norm;
    }
  }
  return TensorD({rows, cols}, f);
}

TensorD correlation_map(const TensorD& features) {
  if (features.rank() != 2) throw ShapeError("correlation_map: features must be rank 2");
  MatrixD s = log_correlation(features).array().exp().matrix();
  return TensorD({features.dim(0), features.dim(0)}, s);
}

double cfsd_from_features(const TensorD& content, const TensorD& stylized) {
  if (content.shape() != stylized.shape() || content.rank() != 2) {
    throw ShapeError("cfsd: feature shapes " + shape_string(content.shape()) + " vs " +
                     shape_string(stylized.shape()));
  }
  const MatrixD lc = log_correlation(content);
  const MatrixD ls = log_correlation(stylized);
  double total = 0;
  for (Eigen::Index i = 0; i < lc.rows(); ++i) {
    double kl = 0;
    for (Eigen::Index j = 0; j < lc.cols(); ++j) kl += std::exp(lc(i, j)) * (lc(i, j) - ls(i, j));
    total += kl;
  }
  return std::max(0.0, total / static_cast<double>(lc.rows()));
}

template <typename Scalar>
double cfsd(const Tensor<Scalar>& content, const Tensor<Scalar>& stylized, int patch) {
  if (content.shape() != stylized.shape()) {
    throw ShapeError("cfsd: image shapes " + shape_string(content.shape()) + " vs " + shape_string(stylized.shape()));
  }
  return cfsd_from_features(extract_patch_features(content, patch), extract_patch_features(stylized, patch));
}

template <typename Scalar>
TensorD rgb_uv_histogram(const Tensor<Scalar>& image, const HistogramOptions& o) {
  check_rgb(image, "rgb_uv_histogram");
  if (o.bins < 2 || !(o.eps > 0) || !(o.uv_limit > 0) || !(o.falloff > 0)) {
    throw RangeError("rgb_uv_histogram: bad options");
  }
  const Eigen::Index n = image.size() / 3;
  const auto px = image.data();
  const int b = o.bins;
  const Eigen::VectorXd centres = Eigen::VectorXd::LinSpaced(b, -o.uv_limit, o.uv_limit);

  Eigen::VectorXd weight(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = px[i], g = px[n + i], bl = px[2 * n + i];
    weight[i] = std::sqrt(r * r + g * g + bl * bl);
  }

  // Kernel rows per pixel, then H_c = Ku^T diag(w) Kv.
  auto kernel_rows = [&](int c, int other) {
    MatrixD k(n, b);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = std::log((px[c * n + i] + o.eps) / (px[other * n + i] + o.eps));
      const double coord = std::clamp(a, -o.uv_limit, o.uv_limit);
      for (int j = 0; j < b; ++j) {
        const double d = (coord - centres[j]) / o.falloff;
        k(i, j) = 1.0 / (1.0 + d * d);
      }
    }
    return k;
  };
  static constexpr int pairs[3][2] = {{1, 2}, {0, 2}, {0, 1}};
  Eigen::VectorXd hist(3 * b * b);
  for (int c = 0; c < 3; ++c) {
    const MatrixD ku = kernel_rows(c, pairs[c][0]);
    const MatrixD kv = kernel_rows(c, pairs[c][1]);
    MatrixD plane = ku.transpose() * weight.asDiagonal() * kv;
    hist.segment(static_cast<Eigen::Index>(c) * b * b, b * b) = Eigen::Map<const Eigen::VectorXd>(plane.data(), b * b);
  }
  const double total = hist.sum();
  if (!(total > 0)) {
    warn("rgb_uv_histogram: image has zero intensity everywhere; using the uniform histogram");
    hist.setConstant(1.0 / static_cast<double>(hist.size()));
  } else {
    hist /= total;
  }
  return TensorD({3, b, b}, std::move(hist));
}

double histogram_loss(const TensorD& a, const TensorD& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("histogram_loss: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  auto check = [](const TensorD& h) {
    if (h.vec().minCoeff() < 0 || std::abs(h.vec().sum() - 1.0) > 1e-6) {
      throw NormalizationError("histogram_loss: histogram must be nonnegative with total mass 1");
    }
  };
  check(a);
  check(b);
  const double d = (a.vec().array().sqrt() - b.vec().array().sqrt()).matrix().norm() / std::sqrt(2.0);
  return std::min(1.0, d);
}

template TensorD extract_patch_features(const Tensor<float>&, int);
template TensorD extract_patch_features(const Tensor<double>&, int);
template double cfsd(const Tensor<float>&, const Tensor<float>&, int);
template double cfsd(const Tensor<double>&, const Tensor<double>&, int);
template TensorD rgb_uv_histogram(const Tensor<float>&, const HistogramOptions&);
template TensorD rgb_uv_histogram(const Tensor<double>&, const HistogramOptions&);

}  // namespace styleid
