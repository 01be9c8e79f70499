#include "styleid/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace styleid {

TensorF read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&img, &black, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  const int h = static_cast<int>(img.height);
  const int w = static_cast<int>(img.width);
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  Vector<float> v(static_cast<Eigen::Index>(3 * plane));
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) v[static_cast<Eigen::Index>(c * plane + i)] = buf[3 * i + c] / 255.0f;
  }
  return TensorF({3, h, w}, std::move(v));
}

namespace {

std::uint8_t to_byte(float u) {
  const float c = std::clamp(u, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::floor(c * 255.0f + 0.5f));
}

void check_rgb(const TensorF& image, const char* who) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError(std::string(who) + ": expected 3 x H x W, got " + shape_string(image.shape()));
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const TensorF& image) {
  check_rgb(image, "write_png");
  const int h = image.dim(1);
  const int w = image.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  std::vector<std::uint8_t> buf(3 * plane);
  const auto px = image.data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) buf[3 * i + c] = to_byte(px[c * plane + i]);
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

TensorF unit_to_model(const TensorF& image) {
  return TensorF(image.shape(), Vector<float>(image.vec().array() * 2.0f - 1.0f));
}

TensorF model_to_unit(const TensorF& image) {
  return TensorF(image.shape(), Vector<float>((image.vec().array() + 1.0f) * 0.5f));
}

TensorF quantize8(const TensorF& image) {
  Vector<float> v(image.size());
  const auto px = image.data();
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = to_byte(px[static_cast<std::size_t>(i)]) / 255.0f;
  return TensorF(image.shape(), std::move(v));
}

namespace {

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1) return ((a + 2) * x - (a + 3)) * x * x + 1;
  if (x < 2) return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a;
  return 0;
}

/// Resamples along one axis: out[o] = sum_k w(o, k) in[clamp(k)].
struct Taps {
  std::vector<int> index;
  std::vector<double> weight;
};

std::vector<Taps> axis_taps(int in, int out) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  const double support = scale > 1 ? 2 * scale : 2.0;  // widen when shrinking to avoid aliasing
  const double stretch = scale > 1 ? scale : 1.0;
  for (int o = 0; o < out; ++o) {
    const double centre = (o + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(centre - support)) + 1;
    const int hi = static_cast<int>(std::floor(centre + support));
    auto& t = taps[static_cast<std::size_t>(o)];
    double total = 0;
    for (int k = lo; k <= hi; ++k) {
      const double wgt = cubic((k - centre) / stretch);
      if (wgt == 0) continue;
      t.index.push_back(std::clamp(k, 0, in - 1));
      t.weight.push_back(wgt);
      total += wgt;
    }
    for (double& wgt : t.weight) wgt /= total;
  }
  return taps;
}

}  // namespace

TensorF resize_bicubic(const TensorF& image, int height, int width) {
  check_rgb(image, "resize_bicubic");
  if (height < 1 || width < 1) throw ShapeError("resize_bicubic: target size must be positive");
  const int h = image.dim(1);
  const int w = image.dim(2);
  if (h == height && w == width) return image;
  const auto ty = axis_taps(h, height);
  const auto tx = axis_taps(w, width);
  const auto px = image.data();
  Vector<float> out(3 * static_cast<Eigen::Index>(height) * width);
  std::vector<double> row(static_cast<std::size_t>(w));
  for (int c = 0; c < 3; ++c) {
    const float* src = px.data() + static_cast<std::size_t>(c) * h * w;
    for (int y = 0; y < height; ++y) {
      const auto& t = ty[static_cast<std::size_t>(y)];
      std::fill(row.begin(), row.end(), 0.0);
      for (std::size_t k = 0; k < t.index.size(); ++k) {
        const float* line = src + static_cast<std::size_t>(t.index[k]) * w;
        for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] += t.weight[k] * line[x];
      }
      for (int x = 0; x < width; ++x) {
        const auto& s = tx[static_cast<std::size_t>(x)];
        double acc = 0;
        for (std::size_t k = 0; k < s.index.size(); ++k) acc += s.weight[k] * row[static_cast<std::size_t>(s.index[k])];
        out[(static_cast<Eigen::Index>(c) * height + y) * width + x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return TensorF({3, height, width}, std::move(out));
}

double psnr(const TensorF& a, const TensorF& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const double mse = (a.vec().cast<double>() - b.vec().cast<double>()).squaredNorm() / static_cast<double>(a.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace styleid
