#include "styleid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "styleid/image_io.hpp"

namespace styleid {

const std::vector<Palette>& style_palettes() {
  static const std::vector<Palette> table{
      {{{230, 57, 70}, {241, 250, 238}, {29, 53, 87}}},
      {{{38, 70, 83}, {42, 157, 143}, {233, 196, 106}}},
      {{{244, 162, 97}, {231, 111, 81}, {38, 70, 83}}},
      {{{255, 190, 11}, {251, 86, 7}, {58, 12, 163}}},
      {{{131, 56, 236}, {58, 134, 255}, {255, 0, 110}}},
      {{{0, 48, 73}, {214, 40, 40}, {252, 191, 73}}},
      {{{16, 42, 67}, {98, 182, 203}, {202, 240, 248}}},
      {{{40, 54, 24}, {96, 108, 56}, {221, 161, 94}}},
      {{{88, 24, 69}, {199, 0, 57}, {255, 195, 0}}},
      {{{15, 15, 15}, {120, 120, 120}, {245, 245, 245}}},
      {{{0, 109, 119}, {131, 197, 190}, {255, 221, 210}}},
      {{{73, 80, 87}, {255, 107, 107}, {255, 230, 109}}},
      {{{106, 4, 15}, {208, 0, 0}, {250, 163, 7}}},
      {{{3, 4, 94}, {0, 119, 182}, {144, 224, 239}}},
      {{{56, 102, 65}, {167, 201, 87}, {242, 232, 207}}},
      {{{255, 0, 84}, {255, 189, 0}, {57, 0, 153}}},
  };
  return table;
}

const char* to_string(StyleFamily family) {
  switch (family) {
    case StyleFamily::Stripes: return "stripes";
    case StyleFamily::Checker: return "checker";
    case StyleFamily::NoiseGrain: return "noise_grain";
    case StyleFamily::Stippling: return "stippling";
  }
  return "?";
}

Rgb8 Image8::pixel(int y, int x) const {
  const auto i = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x));
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

TensorF Image8::to_unit() const {
  const std::size_t plane = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  Vector<float> v(static_cast<Eigen::Index>(3 * plane));
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) v[static_cast<Eigen::Index>(c * plane + i)] = rgb[3 * i + c] / 255.0f;
  }
  return TensorF({3, height, width}, std::move(v));
}

namespace {

using Rng = std::mt19937_64;

// splitmix64 finaliser, used to derive independent per-image seeds.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t image_seed(std::uint64_t seed, std::uint64_t stream, int index) {
  return mix(mix(mix(seed) ^ stream) ^ static_cast<std::uint64_t>(index));
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

class Canvas {
 public:
  explicit Canvas(int size) : image_{size, size, std::vector<std::uint8_t>(3 * static_cast<std::size_t>(size) * size)} {}

  int size() const { return image_.width; }
  void set(int y, int x, const Rgb8& c) {
    const auto i = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(image_.width) + static_cast<std::size_t>(x));
    image_.rgb[i] = c[0];
    image_.rgb[i + 1] = c[1];
    image_.rgb[i + 2] = c[2];
  }
  /// Paints every pixel whose centre satisfies `inside(x + 0.5, y + 0.5)`.
  template <typename Pred>
  void fill(const Rgb8& c, Pred&& inside) {
    for (int y = 0; y < size(); ++y) {
      for (int x = 0; x < size(); ++x) {
        if (inside(x + 0.5, y + 0.5)) set(y, x, c);
      }
    }
  }
  Image8 take() && { return std::move(image_); }

 private:
  Image8 image_;
};

Rgb8 random_colour(Rng& rng, int lo, int hi) {
  return {static_cast<std::uint8_t>(uniform_int(rng, lo, hi)), static_cast<std::uint8_t>(uniform_int(rng, lo, hi)),
          static_cast<std::uint8_t>(uniform_int(rng, lo, hi))};
}

int colour_distance(const Rgb8& a, const Rgb8& b) {
  int d = 0;
  for (int c = 0; c < 3; ++c) d += std::abs(int{a[static_cast<std::size_t>(c)]} - int{b[static_cast<std::size_t>(c)]});
  return d;
}

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

DatasetItem generate_content(std::uint64_t seed, int index, int resolution) {
  Rng rng(image_seed(seed, 0xC0, index));
  const double n = resolution;
  Canvas canvas(resolution);
  const Rgb8 background = random_colour(rng, 30, 225);
  canvas.fill(background, [](double, double) { return true; });

  const int shapes = uniform_int(rng, 2, 4);
  for (int s = 0; s < shapes; ++s) {
    Rgb8 colour;
    do {
      colour = random_colour(rng, 0, 255);
    } while (colour_distance(colour, background) < 150);
    const int kind = uniform_int(rng, 0, 2);
    const double cx = uniform(rng, 0.15 * n, 0.85 * n);
    const double cy = uniform(rng, 0.15 * n, 0.85 * n);
    const double r = uniform(rng, 0.1 * n, 0.25 * n);
    if (kind == 0) {
      canvas.fill(colour, [&](double x, double y) { return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r; });
    } else if (kind == 1) {
      const double hw = r * uniform(rng, 0.6, 1.2);
      const double hh = r * uniform(rng, 0.6, 1.2);
      canvas.fill(colour, [&](double x, double y) { return std::abs(x - cx) <= hw && std::abs(y - cy) <= hh; });
    } else {
      const double a0 = uniform(rng, 0, 2 * std::numbers::pi);
      double vx[3], vy[3];
      for (int k = 0; k < 3; ++k) {
        const double a = a0 + k * 2 * std::numbers::pi / 3;
        vx[k] = cx + r * std::cos(a);
        vy[k] = cy + r * std::sin(a);
      }
      canvas.fill(colour, [&](double x, double y) {
        const double e0 = edge(vx[0], vy[0], vx[1], vy[1], x, y);
        const double e1 = edge(vx[1], vy[1], vx[2], vy[2], x, y);
        const double e2 = edge(vx[2], vy[2], vx[0], vy[0], x, y);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      });
    }
  }
  return {"content_" + std::to_string(index), std::move(canvas).take(), StyleFamily::Stripes, -1};
}

DatasetItem generate_style(std::uint64_t seed, int index, int resolution) {
  Rng rng(image_seed(seed, 0x57, index));
  const auto& palettes = style_palettes();
  const int palette_id = uniform_int(rng, 0, static_cast<int>(palettes.size()) - 1);
  Palette p = palettes[static_cast<std::size_t>(palette_id)];
  std::shuffle(p.begin(), p.end(), rng);
  const auto family = static_cast<StyleFamily>(uniform_int(rng, 0, 3));
  Canvas canvas(resolution);

  switch (family) {
    case StyleFamily::Stripes: {
      const double angle = uniform(rng, 0, std::numbers::pi);
      const double width = uniform(rng, 2.5, 7.0);
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (int k = 0; k < 3; ++k) {
        canvas.fill(p[static_cast<std::size_t>(k)], [&](double x, double y) {
          const auto band = static_cast<long>(std::floor((x * ca + y * sa) / width));
          return ((band % 3) + 3) % 3 == k;
        });
      }
      break;
    }
    case StyleFamily::Checker: {
      const double angle = uniform(rng, 0, std::numbers::pi / 2);
      const double cell = uniform(rng, 4.0, 12.0);
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (int k = 0; k < 3; ++k) {
        canvas.fill(p[static_cast<std::size_t>(k)], [&](double x, double y) {
          const auto i = static_cast<long>(std::floor((x * ca + y * sa) / cell));
          const auto j = static_cast<long>(std::floor((-x * sa + y * ca) / cell));
          return (((i + 2 * j) % 3) + 3) % 3 == k;
        });
      }
      break;
    }
    case StyleFamily::NoiseGrain: {
      const int grain = uniform_int(rng, 1, 3);
      const double p0 = uniform(rng, 0.4, 0.7);
      const double p1 = uniform(rng, 0.15, 1.0 - p0 - 0.05);
      for (int gy = 0; gy < resolution; gy += grain) {
        for (int gx = 0; gx < resolution; gx += grain) {
          const double u = uniform(rng, 0, 1);
          const Rgb8& c = u < p0 ? p[0] : (u < p0 + p1 ? p[1] : p[2]);
          for (int y = gy; y < std::min(gy + grain, resolution); ++y) {
            for (int x = gx; x < std::min(gx + grain, resolution); ++x) canvas.set(y, x, c);
          }
        }
      }
      break;
    }
    case StyleFamily::Stippling: {
      canvas.fill(p[0], [](double, double) { return true; });
      const int dots = uniform_int(rng, resolution * resolution / 40, resolution * resolution / 16);
      const double max_r = uniform(rng, 1.0, 3.0);
      for (int d = 0; d < dots; ++d) {
        const double cx = uniform(rng, 0, resolution);
        const double cy = uniform(rng, 0, resolution);
        const double r = uniform(rng, 0.7, max_r);
        const Rgb8& c = p[static_cast<std::size_t>(uniform_int(rng, 1, 2))];
        const int x0 = std::max(0, static_cast<int>(cx - r - 1)), x1 = std::min(resolution - 1, static_cast<int>(cx + r + 1));
        const int y0 = std::max(0, static_cast<int>(cy - r - 1)), y1 = std::min(resolution - 1, static_cast<int>(cy + r + 1));
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (dx * dx + dy * dy <= r * r) canvas.set(y, x, c);
          }
        }
      }
      break;
    }
  }
  return {"style_" + std::to_string(index), std::move(canvas).take(), family, palette_id};
}

Dataset generate_dataset(const ProceduralSpec& spec) {
  if (spec.resolution < 8) throw RangeError("dataset: resolution must be at least 8");
  Dataset d;
  // Validation images use a disjoint index range of the same streams.
  constexpr int val_offset = 1 << 24;
  for (int i = 0; i < spec.content_train; ++i) d.content_train.push_back(generate_content(spec.seed, i, spec.resolution));
  for (int i = 0; i < spec.style_train; ++i) d.style_train.push_back(generate_style(spec.seed, i, spec.resolution));
  for (int i = 0; i < spec.content_val; ++i) {
    auto item = generate_content(spec.seed, val_offset + i, spec.resolution);
    item.name = "content_val_" + std::to_string(i);
    d.content_val.push_back(std::move(item));
  }
  for (int i = 0; i < spec.style_val; ++i) {
    auto item = generate_style(spec.seed, val_offset + i, spec.resolution);
    item.name = "style_val_" + std::to_string(i);
    d.style_val.push_back(std::move(item));
  }
  return d;
}

void to_json(nlohmann::json& j, const ProceduralSpec& s) {
  j = nlohmann::json{{"seed", s.seed},
                     {"resolution", s.resolution},
                     {"content_train", s.content_train},
                     {"style_train", s.style_train},
                     {"content_val", s.content_val},
                     {"style_val", s.style_val}};
}

void from_json(const nlohmann::json& j, ProceduralSpec& s) {
  ProceduralSpec d;
  s.seed = j.value("seed", d.seed);
  s.resolution = j.value("resolution", d.resolution);
  s.content_train = j.value("content_train", d.content_train);
  s.style_train = j.value("style_train", d.style_train);
  s.content_val = j.value("content_val", d.content_val);
  s.style_val = j.value("style_val", d.style_val);
}

void write_dataset(const Dataset& data, const ProceduralSpec& spec, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  nlohmann::json manifest{{"spec", spec}};
  auto emit = [&](const std::vector<DatasetItem>& items, const std::string& kind, const std::string& split) {
    const fs::path dir = root / kind / split;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    auto& list = manifest[kind][split];
    list = nlohmann::json::array();
    for (const auto& item : items) {
      const fs::path rel = fs::path(kind) / split / (item.name + ".png");
      write_png(root / rel, item.image.to_unit());
      nlohmann::json entry{{"name", item.name}, {"file", rel.generic_string()}};
      if (kind == "style") {
        entry["family"] = to_string(item.family);
        entry["palette"] = item.palette;
      }
      list.push_back(std::move(entry));
    }
  };
  emit(data.content_train, "content", "train");
  emit(data.content_val, "content", "val");
  emit(data.style_train, "style", "train");
  emit(data.style_val, "style", "val");
  std::ofstream out(root / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("cannot write manifest under '" + root.string() + "'");
}

}  // namespace styleid
