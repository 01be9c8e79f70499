#include "styleid/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace styleid {

void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = nlohmann::json{{"image_channels", c.image_channels},
                     {"resolution", c.resolution},
                     {"base_channels", c.base_channels},
                     {"channel_mult", c.channel_mult},
                     {"attention_resolutions", c.attention_resolutions},
                     {"groups", c.groups},
                     {"time_embed_dim", c.time_embed_dim},
                     {"train_steps", c.train_steps}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
  UNetConfig d;
  c.image_channels = j.value("image_channels", d.image_channels);
  c.resolution = j.value("resolution", d.resolution);
  c.base_channels = j.value("base_channels", d.base_channels);
  c.channel_mult = j.value("channel_mult", d.channel_mult);
  c.attention_resolutions = j.value("attention_resolutions", d.attention_resolutions);
  c.groups = j.value("groups", d.groups);
  c.time_embed_dim = j.value("time_embed_dim", d.time_embed_dim);
  c.train_steps = j.value("train_steps", d.train_steps);
}

namespace {

constexpr std::array<char, 8> kMagic{'S', 'T', 'Y', 'L', 'E', 'I', 'D', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) {
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                         static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    bytes(b.data(), 4);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish() {
    out_.close();
    if (!out_) throw IoError("write to '" + path_.string() + "' failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open checkpoint '" + path.string() + "'");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("checkpoint '" + path_.string() + "' is truncated");
  }
  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    bytes(b.data(), 4);
    return b[0] | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
  }
  std::string str(std::uint32_t limit) {
    const auto n = u32();
    if (n > limit) throw IoError("checkpoint '" + path_.string() + "' has an implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const UNetWeights<float>& weights,
                     const nlohmann::json& metadata) {
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  nlohmann::json header{{"architecture", weights.config}, {"metadata", metadata}};
  w.str(header.dump());
  w.u32(static_cast<std::uint32_t>(weights.params.size()));
  std::vector<unsigned char> raw;
  for (const auto& [name, t] : weights.params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    raw.resize(static_cast<std::size_t>(t.size()) * 4);
    std::size_t i = 0;
    for (float f : t.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int k = 0; k < 4; ++k) raw[i++] = static_cast<unsigned char>(bits >> (8 * k));
    }
    w.bytes(raw.data(), raw.size());
  }
  w.finish();
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw IoError("'" + path.string() + "' is not a styleid checkpoint");
  if (const auto v = r.u32(); v != kVersion) {
    throw IoError("checkpoint '" + path.string() + "' has unsupported version " + std::to_string(v));
  }
  LoadedCheckpoint out;
  try {
    const auto header = nlohmann::json::parse(r.str(1u << 20));
    out.weights.config = header.at("architecture").get<UNetConfig>();
    out.metadata = header.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint '" + path.string() + "' has a bad header: " + e.what());
  }
  out.weights.config.validate();

  const auto count = r.u32();
  std::vector<unsigned char> raw;
  for (std::uint32_t n = 0; n < count; ++n) {
    auto name = r.str(1024);
    const auto rank = r.u32();
    if (rank < 1 || rank > 8) throw IoError("checkpoint record '" + name + "' has bad rank");
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<int>(r.u32()));
    const auto size = shape_size(shape);
    if (size <= 0 || size > (Eigen::Index{1} << 28)) throw IoError("checkpoint record '" + name + "' has bad shape");
    raw.resize(static_cast<std::size_t>(size) * 4);
    r.bytes(raw.data(), raw.size());
    Vector<float> v(size);
    for (Eigen::Index i = 0; i < size; ++i) {
      const auto* b = raw.data() + 4 * i;
      v[i] = std::bit_cast<float>(b[0] | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
                                  (std::uint32_t{b[3]} << 24));
    }
    out.weights.params.emplace(std::move(name), TensorF(std::move(shape), std::move(v)));
  }
  if (!r.at_end()) throw IoError("checkpoint '" + path.string() + "' has trailing bytes");

  // Every parameter the architecture needs must be present with the right shape.
  const auto reference = init_unet<float>(out.weights.config, 0);
  for (const auto& [name, t] : reference.params) {
    auto it = out.weights.params.find(name);
    if (it == out.weights.params.end()) throw IoError("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw IoError("checkpoint parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                    ", architecture needs " + shape_string(t.shape()));
    }
  }
  if (out.weights.params.size() != reference.params.size()) throw IoError("checkpoint has unknown parameters");
  return out;
}

}  // namespace styleid
