#include "styleid/ops.hpp"

#include <cmath>

namespace styleid {

namespace {

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw ShapeError(std::string(op) + ": " + what);
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, op, "shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;

// Double-precision reductions with a fixed 8-lane order: deterministic and
// still vectorisable.
template <typename Scalar>
double lane_sum(const Scalar* x, Eigen::Index n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  Eigen::Index i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += x[i + j];
  }
  double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += x[i];
  return s;
}

template <typename Scalar>
double lane_dot(const Scalar* x, const Scalar* y, Eigen::Index n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  Eigen::Index i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += static_cast<double>(x[i + j]) * y[i + j];
  }
  double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
  return s;
}

template <typename Scalar>
double lane_sq_dev(const Scalar* x, double mean, Eigen::Index n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  Eigen::Index i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) {
      const double d = x[i + j] - mean;
      acc[j] += d * d;
    }
  }
  double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += (x[i] - mean) * (x[i] - mean);
  return s;
}

struct ConvGeometry {
  int channels, height, width, kernel, stride, pad, out_h, out_w;
};

ConvGeometry conv_geometry(const Shape& x, const Shape& w, int stride, int pad) {
  require(x.size() == 3, "conv2d", "input must be C x H x W, got " + shape_string(x));
  require(w.size() == 4, "conv2d", "weight must be Cout x Cin x k x k, got " + shape_string(w));
  require(w[1] == x[0], "conv2d", "input channels " + std::to_string(x[0]) + " vs kernel " +
                                      std::to_string(w[1]));
  require(w[2] == w[3], "conv2d", "kernel must be square");
  require(stride >= 1 && pad >= 0, "conv2d", "invalid stride/pad");
  const int k = w[2];
  const int span_h = x[1] + 2 * pad - k;
  const int span_w = x[2] + 2 * pad - k;
  require(span_h >= 0 && span_w >= 0, "conv2d", "kernel larger than padded input");
  require(span_h % stride == 0 && span_w % stride == 0, "conv2d",
          "non-integral output size for input " + shape_string(x));
  return {x[0], x[1], x[2], k, stride, pad, span_h / stride + 1, span_w / stride + 1};
}

// Unfolds every k x k receptive field into a column: rows are (c, ky, kx),
// columns are output positions.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Scalar* x, const ConvGeometry& g) {
  const int k = g.kernel;
  RowMatrix<Scalar> cols(static_cast<Eigen::Index>(g.channels) * k * k,
                         static_cast<Eigen::Index>(g.out_h) * g.out_w);
  for (int c = 0; c < g.channels; ++c) {
    const Scalar* plane = x + static_cast<std::ptrdiff_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          Scalar* dst = row + static_cast<std::ptrdiff_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<std::ptrdiff_t>(iy) * g.width;
          if (g.stride == 1) {
            const int lo = std::max(0, g.pad - kx);
            const int hi = std::min(g.out_w, g.width + g.pad - kx);
            std::fill(dst, dst + lo, Scalar(0));
            if (hi > lo) std::copy(src + lo + kx - g.pad, src + hi + kx - g.pad, dst + lo);
            std::fill(dst + std::max(lo, hi), dst + g.out_w, Scalar(0));
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride + kx - g.pad;
              dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : Scalar(0);
            }
          }
        }
      }
    }
  }
  return cols;
}

// Stride-1 convolution as k*k accumulated GEMMs over shifted views of a
// zero-padded copy of the input. Output rows are computed at the padded
// width and the k-1 wrap-around columns are dropped afterwards; one spare
// padded row keeps the last shifted view in bounds.
template <typename Scalar>
void conv2d_shifted(const Scalar* x, const Scalar* w, int out_channels, const ConvGeometry& g, Scalar* out) {
  const int k = g.kernel;
  const int wp = g.width + 2 * g.pad;
  const int hp = g.height + 2 * g.pad;
  const Eigen::Index plane = static_cast<Eigen::Index>(hp + 1) * wp;
  RowMatrix<Scalar> padded = RowMatrix<Scalar>::Zero(g.channels, plane);
  for (int c = 0; c < g.channels; ++c) {
    for (int y = 0; y < g.height; ++y) {
      const Scalar* src = x + (static_cast<std::ptrdiff_t>(c) * g.height + y) * g.width;
      std::copy(src, src + g.width, padded.row(c).data() + static_cast<std::ptrdiff_t>(y + g.pad) * wp + g.pad);
    }
  }
  const Eigen::Index span = static_cast<Eigen::Index>(g.out_h) * wp;
  RowMatrix<Scalar> acc = RowMatrix<Scalar>::Zero(out_channels, span);
  using TapMap = Eigen::Map<const RowMatrix<Scalar>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      const TapMap tap(w + ky * k + kx, out_channels, g.channels,
                       Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(static_cast<Eigen::Index>(g.channels) * k * k, k * k));
      acc.noalias() += tap * padded.middleCols(static_cast<Eigen::Index>(ky) * wp + kx, span);
    }
  }
  for (int o = 0; o < out_channels; ++o) {
    for (int y = 0; y < g.out_h; ++y) {
      const Scalar* src = acc.row(o).data() + static_cast<std::ptrdiff_t>(y) * wp;
      std::copy(src, src + g.out_w, out + (static_cast<std::ptrdiff_t>(o) * g.out_h + y) * g.out_w);
    }
  }
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const ConvGeometry& g, Scalar* x) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    Scalar* plane = x + static_cast<std::ptrdiff_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.height) continue;
          const Scalar* src = row + static_cast<std::ptrdiff_t>(oy) * g.out_w;
          Scalar* dst = plane + static_cast<std::ptrdiff_t>(iy) * g.width;
          if (g.stride == 1) {
            const int lo = std::max(0, g.pad - kx);
            const int hi = std::min(g.out_w, g.width + g.pad - kx);
            Scalar* d = dst + kx - g.pad;
            for (int ox = lo; ox < hi; ++ox) d[ox] += src[ox];
            continue;
          }
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

struct GroupStats {
  std::vector<double> mean, rstd;
};

template <typename Scalar>
GroupStats group_stats(const Tensor<Scalar>& x, int groups, double eps) {
  const Eigen::Index per_group = x.size() / groups;
  const Scalar* p = x.data().data();
  GroupStats s{std::vector<double>(groups), std::vector<double>(groups)};
  for (int g = 0; g < groups; ++g) {
    const Scalar* q = p + g * per_group;
    const double mean = lane_sum(q, per_group) / static_cast<double>(per_group);
    const double var = lane_sq_dev(q, mean, per_group) / static_cast<double>(per_group);
    s.mean[g] = mean;
    s.rstd[g] = 1.0 / std::sqrt(var + eps);
  }
  return s;
}

void check_group_norm(const Shape& x, int groups, const Shape& scale, const Shape& shift, double eps) {
  require(x.size() == 3, "group_norm", "input must be C x H x W");
  require(groups > 0 && x[0] % groups == 0, "group_norm",
          std::to_string(x[0]) + " channels not divisible into " + std::to_string(groups) + " groups");
  require(shape_size(scale) == x[0] && shape_size(shift) == x[0], "group_norm",
          "affine parameters must have one entry per channel");
  if (!(eps > 0)) throw RangeError("group_norm: eps must be positive");
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul", "operands must be matrices");
  require(a.dim(1) == b.dim(0), "matmul",
          "inner dimensions differ: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Vector<Scalar> data(static_cast<Eigen::Index>(a.dim(0)) * b.dim(1));
  MatrixMap<Scalar>(data.data(), a.dim(0), b.dim(1)).noalias() = a.matrix() * b.matrix();
  return Tensor<Scalar>({a.dim(0), b.dim(1)}, std::move(data));
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  require(a.rank() == 2, "transpose", "operand must be a matrix");
  Vector<Scalar> data(a.size());
  MatrixMap<Scalar>(data.data(), a.dim(1), a.dim(0)) = a.matrix().transpose();
  return Tensor<Scalar>({a.dim(1), a.dim(0)}, std::move(data));
}

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& x) {
  require(x.rank() == 2, "softmax_rows", "operand must be a matrix");
  auto in = x.matrix();
  Vector<Scalar> data(x.size());
  MatrixMap<Scalar> out(data.data(), in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const Scalar m = in.row(r).maxCoeff();
    out.row(r) = (in.row(r).array() - m).exp().matrix();
    out.row(r) *= static_cast<Scalar>(1.0 / lane_sum(out.row(r).data(), out.cols()));
  }
  return Tensor<Scalar>(x.shape(), std::move(data));
}

template <typename Scalar>
Tensor<Scalar> softmax_rows_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_y) {
  require_same_shape(y.shape(), grad_y.shape(), "softmax_rows_backward");
  auto s = y.matrix();
  auto g = grad_y.matrix();
  Vector<Scalar> data(y.size());
  MatrixMap<Scalar> out(data.data(), s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double dot = lane_dot(s.row(r).data(), g.row(r).data(), s.cols());
    out.row(r) = (s.row(r).array() * (g.row(r).array() - static_cast<Scalar>(dot))).matrix();
  }
  return Tensor<Scalar>(y.shape(), std::move(data));
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, int stride, int pad) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride, pad);
  const Eigen::Index positions = static_cast<Eigen::Index>(g.out_h) * g.out_w;
  const Eigen::Index patch = static_cast<Eigen::Index>(g.channels) * g.kernel * g.kernel;
  auto wm = w.matrix(w.dim(0), patch);
  Vector<Scalar> data(w.dim(0) * positions);
  MatrixMap<Scalar> out(data.data(), w.dim(0), positions);
  if (g.kernel == 1 && stride == 1 && pad == 0) {
    out.noalias() = wm * x.matrix(g.channels, positions);
  } else if (stride == 1) {
    conv2d_shifted(x.data().data(), w.data().data(), w.dim(0), g, data.data());
  } else {
    out.noalias() = wm * im2col(x.data().data(), g);
  }
  return Tensor<Scalar>({w.dim(0), g.out_h, g.out_w}, std::move(data));
}

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                    const Tensor<Scalar>& grad_y, int stride, int pad) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), stride, pad);
  require(grad_y.shape() == Shape({w.dim(0), g.out_h, g.out_w}), "conv2d_backward",
          "gradient shape " + shape_string(grad_y.shape()));
  const Eigen::Index positions = static_cast<Eigen::Index>(g.out_h) * g.out_w;
  const Eigen::Index patch = static_cast<Eigen::Index>(g.channels) * g.kernel * g.kernel;
  auto wm = w.matrix(w.dim(0), patch);
  auto gy = grad_y.matrix(w.dim(0), positions);

  Vector<Scalar> grad_w(w.size());
  MatrixMap<Scalar> gw(grad_w.data(), w.dim(0), patch);
  if (g.kernel == 1 && stride == 1 && pad == 0) {
    Vector<Scalar> grad_x(x.size());
    MatrixMap<Scalar>(grad_x.data(), patch, positions).noalias() = wm.transpose() * gy;
    gw.noalias() = gy * x.matrix(g.channels, positions).transpose();
    return {Tensor<Scalar>(x.shape(), std::move(grad_x)), Tensor<Scalar>(w.shape(), std::move(grad_w))};
  }
  RowMatrix<Scalar> grad_cols(patch, positions);
  grad_cols.noalias() = wm.transpose() * gy;
  gw.noalias() = gy * im2col(x.data().data(), g).transpose();
  Vector<Scalar> grad_x = Vector<Scalar>::Zero(x.size());
  col2im(grad_cols, g, grad_x.data());
  return {Tensor<Scalar>(x.shape(), std::move(grad_x)), Tensor<Scalar>(w.shape(), std::move(grad_w))};
}

template <typename Scalar>
Tensor<Scalar> group_norm(const Tensor<Scalar>& x, int groups, const Tensor<Scalar>& scale,
                          const Tensor<Scalar>& shift, double eps) {
  check_group_norm(x.shape(), groups, scale.shape(), shift.shape(), eps);
  const GroupStats st = group_stats(x, groups, eps);
  const int channels = x.dim(0);
  const Eigen::Index hw = x.size() / channels;
  const int per_group = channels / groups;
  Vector<Scalar> out(x.size());
  const Scalar* p = x.data().data();
  for (int c = 0; c < channels; ++c) {
    const int grp = c / per_group;
    const double a = st.rstd[grp] * scale[c];
    const double b = shift[c] - st.mean[grp] * a;
    for (Eigen::Index i = c * hw; i < (c + 1) * hw; ++i) out[i] = static_cast<Scalar>(p[i] * a + b);
  }
  return Tensor<Scalar>(x.shape(), std::move(out));
}

template <typename Scalar>
GroupNormGrads<Scalar> group_norm_backward(const Tensor<Scalar>& x, int groups,
                                           const Tensor<Scalar>& scale, double eps,
                                           const Tensor<Scalar>& grad_y) {
  check_group_norm(x.shape(), groups, scale.shape(), scale.shape(), eps);
  require_same_shape(x.shape(), grad_y.shape(), "group_norm_backward");
  const GroupStats st = group_stats(x, groups, eps);
  const int channels = x.dim(0);
  const Eigen::Index hw = x.size() / channels;
  const int per_group = channels / groups;
  const double count = static_cast<double>(hw) * per_group;
  const Scalar* px = x.data().data();
  const Scalar* pg = grad_y.data().data();

  Vector<Scalar> gscale(channels), gshift(channels), gx(x.size());
  for (int grp = 0; grp < groups; ++grp) {
    const double mean = st.mean[grp], rstd = st.rstd[grp];
    double sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (int c = grp * per_group; c < (grp + 1) * per_group; ++c) {
      double ds = 0, db = 0;
      for (Eigen::Index i = c * hw; i < (c + 1) * hw; ++i) {
        const double xhat = (px[i] - mean) * rstd;
        ds += pg[i] * xhat;
        db += pg[i];
      }
      gscale[c] = static_cast<Scalar>(ds);
      gshift[c] = static_cast<Scalar>(db);
      sum_dxhat += db * scale[c];
      sum_dxhat_xhat += ds * scale[c];
    }
    const double m1 = sum_dxhat / count, m2 = sum_dxhat_xhat / count;
    for (int c = grp * per_group; c < (grp + 1) * per_group; ++c) {
      for (Eigen::Index i = c * hw; i < (c + 1) * hw; ++i) {
        const double xhat = (px[i] - mean) * rstd;
        gx[i] = static_cast<Scalar>(rstd * (pg[i] * scale[c] - m1 - xhat * m2));
      }
    }
  }
  return {Tensor<Scalar>(x.shape(), std::move(gx)), Tensor<Scalar>(scale.shape(), std::move(gscale)),
          Tensor<Scalar>(scale.shape(), std::move(gshift))};
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b) {
  require(w.rank() == 2, "linear", "weight must be out x in");
  const int in = w.dim(1), out = w.dim(0);
  require(b.size() == out, "linear", "bias length must equal output features");
  const bool vector_input = x.rank() == 1;
  require(vector_input || x.rank() == 2, "linear", "input must be a vector or a matrix");
  const int rows = vector_input ? 1 : x.dim(0);
  require((vector_input ? x.dim(0) : x.dim(1)) == in, "linear",
          "input features " + shape_string(x.shape()) + " vs weight " + shape_string(w.shape()));
  Vector<Scalar> data(static_cast<Eigen::Index>(rows) * out);
  MatrixMap<Scalar> y(data.data(), rows, out);
  y.noalias() = x.matrix(rows, in) * w.matrix().transpose();
  y.rowwise() += b.vec().transpose();
  return vector_input ? Tensor<Scalar>({out}, std::move(data)) : Tensor<Scalar>({rows, out}, std::move(data));
}

template <typename Scalar>
Tensor<Scalar> silu(const Tensor<Scalar>& x) {
  const auto a = x.vec().array();
  Vector<Scalar> y = (a / (Scalar(1) + (-a).exp())).matrix();
  return Tensor<Scalar>(x.shape(), std::move(y));
}

template <typename Scalar>
Tensor<Scalar> silu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_y) {
  require_same_shape(x.shape(), grad_y.shape(), "silu_backward");
  const auto a = x.vec().array();
  const auto sig = (Scalar(1) / (Scalar(1) + (-a).exp())).eval();
  Vector<Scalar> g = (grad_y.vec().array() * sig * (Scalar(1) + a * (Scalar(1) - sig))).matrix();
  return Tensor<Scalar>(x.shape(), std::move(g));
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest2x(const Tensor<Scalar>& x) {
  require(x.rank() == 3, "upsample_nearest2x", "input must be C x H x W");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Vector<Scalar> out(x.size() * 4);
  const Scalar* p = x.data().data();
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < 2 * h; ++y) {
      const Scalar* src = p + (static_cast<std::ptrdiff_t>(ch) * h + y / 2) * w;
      Scalar* dst = out.data() + (static_cast<std::ptrdiff_t>(ch) * 2 * h + y) * 2 * w;
      for (int xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
    }
  }
  return Tensor<Scalar>({c, 2 * h, 2 * w}, std::move(out));
}

template <typename Scalar>
Tensor<Scalar> upsample_nearest2x_backward(const Tensor<Scalar>& grad_y) {
  require(grad_y.rank() == 3 && grad_y.dim(1) % 2 == 0 && grad_y.dim(2) % 2 == 0,
          "upsample_nearest2x_backward", "gradient must be C x 2H x 2W");
  const int c = grad_y.dim(0), h = grad_y.dim(1) / 2, w = grad_y.dim(2) / 2;
  Vector<Scalar> out = Vector<Scalar>::Zero(grad_y.size() / 4);
  const Scalar* p = grad_y.data().data();
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < 2 * h; ++y) {
      const Scalar* src = p + (static_cast<std::ptrdiff_t>(ch) * 2 * h + y) * 2 * w;
      Scalar* dst = out.data() + (static_cast<std::ptrdiff_t>(ch) * h + y / 2) * w;
      for (int xx = 0; xx < 2 * w; ++xx) dst[xx / 2] += src[xx];
    }
  }
  return Tensor<Scalar>({c, h, w}, std::move(out));
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  return Tensor<Scalar>(a.shape(), Vector<Scalar>(a.vec() + b.vec()));
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  return Tensor<Scalar>(a.shape(), Vector<Scalar>(a.vec() - b.vec()));
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  return Tensor<Scalar>(a.shape(), Vector<Scalar>(a.vec().cwiseProduct(b.vec())));
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  return Tensor<Scalar>(a.shape(), Vector<Scalar>(a.vec() * factor));
}

template <typename Scalar>
Tensor<Scalar> add_channel(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  require(x.rank() == 3, "add_channel", "input must be C x H x W");
  require(bias.size() == x.dim(0), "add_channel", "bias must have one entry per channel");
  const Eigen::Index hw = x.size() / x.dim(0);
  Vector<Scalar> data(x.size());
  MatrixMap<Scalar> out(data.data(), x.dim(0), hw);
  out = x.matrix(x.dim(0), hw);
  out.colwise() += bias.vec();
  return Tensor<Scalar>(x.shape(), std::move(data));
}

template <typename Scalar>
Tensor<Scalar> sum_spatial(const Tensor<Scalar>& x) {
  require(x.rank() == 3, "sum_spatial", "input must be C x H x W");
  const Eigen::Index hw = x.size() / x.dim(0);
  auto m = x.matrix(x.dim(0), hw);
  Vector<Scalar> out(x.dim(0));
  for (int c = 0; c < x.dim(0); ++c) {
    double acc = 0;
    for (Eigen::Index i = 0; i < hw; ++i) acc += m(c, i);
    out[c] = static_cast<Scalar>(acc);
  }
  return Tensor<Scalar>({x.dim(0)}, std::move(out));
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  double acc = 0;
  for (Scalar v : x.data()) acc += v;
  return Tensor<Scalar>::scalar(static_cast<Scalar>(acc));
}

template <typename Scalar>
Tensor<Scalar> mean_squared_error(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mean_squared_error");
  double acc = 0;
  const auto pa = a.data(), pb = b.data();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += d * d;
  }
  return Tensor<Scalar>::scalar(static_cast<Scalar>(acc / static_cast<double>(pa.size())));
}

#define STYLEID_INSTANTIATE_OPS(S)                                                              \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> transpose(const Tensor<S>&);                                               \
  template Tensor<S> softmax_rows(const Tensor<S>&);                                            \
  template Tensor<S> softmax_rows_backward(const Tensor<S>&, const Tensor<S>&);                 \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, int, int);                      \
  template Conv2dGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, \
                                          int, int);                                            \
  template Tensor<S> group_norm(const Tensor<S>&, int, const Tensor<S>&, const Tensor<S>&,      \
                                double);                                                        \
  template GroupNormGrads<S> group_norm_backward(const Tensor<S>&, int, const Tensor<S>&,       \
                                                 double, const Tensor<S>&);                     \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> silu(const Tensor<S>&);                                                    \
  template Tensor<S> silu_backward(const Tensor<S>&, const Tensor<S>&);                         \
  template Tensor<S> upsample_nearest2x(const Tensor<S>&);                                      \
  template Tensor<S> upsample_nearest2x_backward(const Tensor<S>&);                             \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                   \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                   \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                   \
  template Tensor<S> scale(const Tensor<S>&, S);                                                \
  template Tensor<S> add_channel(const Tensor<S>&, const Tensor<S>&);                           \
  template Tensor<S> sum_spatial(const Tensor<S>&);                                             \
  template Tensor<S> sum(const Tensor<S>&);                                                     \
  template Tensor<S> mean_squared_error(const Tensor<S>&, const Tensor<S>&);

STYLEID_INSTANTIATE_OPS(float)
STYLEID_INSTANTIATE_OPS(double)

#undef STYLEID_INSTANTIATE_OPS

}  // namespace styleid
