#include "styleid/unet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace styleid {

namespace {

std::string level_prefix(const char* side, int level) { return side + std::to_string(level); }

// Records parameter shapes in construction order; init_unet draws values in
// the same order so a seed fully determines the weights.
struct ParamSpec {
  std::string name;
  Shape shape;
  int fan_in;  // 0 -> zero init, -1 -> ones
  bool residual_output;
};

void add_norm(std::vector<ParamSpec>& specs, const std::string& p, int channels) {
  specs.push_back({p + ".g", {channels}, -1, false});
  specs.push_back({p + ".b", {channels}, 0, false});
}

void add_conv(std::vector<ParamSpec>& specs, const std::string& p, int cin, int cout, int k,
              bool residual_output = false) {
  specs.push_back({p + ".w", {cout, cin, k, k}, cin * k * k, residual_output});
  specs.push_back({p + ".b", {cout}, 0, false});
}

void add_linear(std::vector<ParamSpec>& specs, const std::string& p, int in, int out,
                bool residual_output = false) {
  specs.push_back({p + ".w", {out, in}, in, residual_output});
  specs.push_back({p + ".b", {out}, 0, false});
}

void add_resblock(std::vector<ParamSpec>& specs, const std::string& p, int cin, int cout, int temb) {
  add_norm(specs, p + ".norm1", cin);
  add_conv(specs, p + ".conv1", cin, cout, 3);
  add_linear(specs, p + ".temb", temb, cout);
  add_norm(specs, p + ".norm2", cout);
  add_conv(specs, p + ".conv2", cout, cout, 3, true);
  if (cin != cout) add_conv(specs, p + ".skip", cin, cout, 1);
}

void add_attention(std::vector<ParamSpec>& specs, const std::string& p, int channels) {
  add_norm(specs, p + ".norm", channels);
  add_linear(specs, p + ".q", channels, channels);
  add_linear(specs, p + ".k", channels, channels);
  add_linear(specs, p + ".v", channels, channels);
  add_linear(specs, p + ".out", channels, channels, true);
}

std::vector<ParamSpec> parameter_specs(const UNetConfig& c) {
  std::vector<ParamSpec> specs;
  const int temb = c.time_embed_dim;
  add_linear(specs, "time.fc1", temb, temb);
  add_linear(specs, "time.fc2", temb, temb);
  add_conv(specs, "conv_in", c.image_channels, c.channels_at(0), 3);
  for (int i = 0; i < c.levels(); ++i) {
    const auto p = level_prefix("enc", i);
    const int cin = i == 0 ? c.channels_at(0) : c.channels_at(i - 1);
    add_resblock(specs, p + ".res", cin, c.channels_at(i), temb);
    if (c.has_attention(i)) add_attention(specs, p + ".attn", c.channels_at(i));
    if (i + 1 < c.levels()) add_conv(specs, p + ".down", c.channels_at(i), c.channels_at(i), 4);
  }
  const int deepest = c.channels_at(c.levels() - 1);
  add_resblock(specs, "mid.res", deepest, deepest, temb);
  add_attention(specs, "mid.attn", deepest);
  for (int i = c.levels() - 1; i >= 0; --i) {
    const auto p = level_prefix("dec", i);
    add_resblock(specs, p + ".res", c.channels_at(i), c.channels_at(i), temb);
    if (c.has_attention(i)) add_attention(specs, p + ".attn", c.channels_at(i));
    if (i > 0) add_conv(specs, p + ".up", c.channels_at(i), c.channels_at(i - 1), 3);
  }
  add_norm(specs, "out.norm", c.channels_at(0));
  add_conv(specs, "out.conv", c.channels_at(0), c.image_channels, 3, true);
  return specs;
}

template <typename Scalar>
const ad::Var<Scalar>& param(const ParamVars<Scalar>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ConfigError("unet: missing parameter '" + name + "'");
  return it->second;
}

template <typename Scalar>
ad::Var<Scalar> conv(const ad::Var<Scalar>& x, const ParamVars<Scalar>& p, const std::string& name,
                     int stride, int pad) {
  return ad::add_channel(ad::conv2d(x, param(p, name + ".w"), stride, pad), param(p, name + ".b"));
}

template <typename Scalar>
ad::Var<Scalar> norm(const ad::Var<Scalar>& x, const ParamVars<Scalar>& p, const std::string& name, int groups) {
  return ad::group_norm(x, groups, param(p, name + ".g"), param(p, name + ".b"), 1e-5);
}

template <typename Scalar>
ad::Var<Scalar> resblock(const ad::Var<Scalar>& x, const ad::Var<Scalar>& temb_act,
                         const ParamVars<Scalar>& p, const std::string& prefix, int groups) {
  auto h = ad::silu(norm(x, p, prefix + ".norm1", groups));
  h = ad::conv2d(h, param(p, prefix + ".conv1.w"), 1, 1);
  auto bias = ad::add(param(p, prefix + ".conv1.b"),
                      ad::linear(temb_act, param(p, prefix + ".temb.w"), param(p, prefix + ".temb.b")));
  h = ad::add_channel(h, bias);
  h = ad::silu(norm(h, p, prefix + ".norm2", groups));
  h = conv(h, p, prefix + ".conv2", 1, 1);
  const auto skip_it = p.find(prefix + ".skip.w");
  const auto skip = skip_it == p.end() ? x : conv(x, p, prefix + ".skip", 1, 0);
  return ad::add(skip, h);
}

}  // namespace

const char* to_string(LayerPosition p) {
  switch (p) {
    case LayerPosition::Encoder: return "encoder";
    case LayerPosition::Bottleneck: return "bottleneck";
    case LayerPosition::Decoder: return "decoder";
  }
  return "?";
}

bool UNetConfig::has_attention(int level) const {
  return std::find(attention_resolutions.begin(), attention_resolutions.end(), resolution_at(level)) !=
         attention_resolutions.end();
}

void UNetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("unet config: " + msg); };
  if (image_channels <= 0 || base_channels <= 0 || groups <= 0) fail("sizes must be positive");
  if (channel_mult.empty()) fail("need at least one level");
  if (resolution <= 0 || resolution % (1 << (levels() - 1)) != 0) fail("resolution not divisible by level count");
  for (int i = 0; i < levels(); ++i) {
    if (channel_mult[static_cast<std::size_t>(i)] <= 0) fail("channel multipliers must be positive");
    if (channels_at(i) % groups != 0) fail("channels not divisible by group count");
  }
  if (time_embed_dim <= 0 || time_embed_dim % 2 != 0) fail("time embedding dim must be positive and even");
  if (train_steps <= 0) fail("train_steps must be positive");
  if (resolution_at(0) <= 0) fail("bad resolution");
  if (has_attention(0) && resolution_at(0) > 32) fail("attention at the full 64x64 resolution is not supported");
}

std::vector<AttentionLayerInfo> attention_registry(const UNetConfig& c) {
  std::vector<AttentionLayerInfo> layers;
  auto push = [&](LayerPosition pos, int level, std::string name) {
    layers.push_back({static_cast<int>(layers.size()), pos, c.resolution_at(level), c.channels_at(level),
                      std::move(name)});
  };
  for (int i = 0; i < c.levels(); ++i) {
    if (c.has_attention(i)) push(LayerPosition::Encoder, i, level_prefix("enc", i) + ".attn");
  }
  push(LayerPosition::Bottleneck, c.levels() - 1, "mid.attn");
  for (int i = c.levels() - 1; i >= 0; --i) {
    if (c.has_attention(i)) push(LayerPosition::Decoder, i, level_prefix("dec", i) + ".attn");
  }
  return layers;
}

std::vector<int> decoder_attention_layers(const UNetConfig& config) {
  std::vector<int> ids;
  for (const auto& l : attention_registry(config)) {
    if (l.position == LayerPosition::Decoder) ids.push_back(l.id);
  }
  return ids;
}

template <typename Scalar>
const Tensor<Scalar>& UNetWeights<Scalar>::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ConfigError("unet: missing parameter '" + name + "'");
  return it->second;
}

template <typename Scalar>
std::size_t UNetWeights<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += static_cast<std::size_t>(t.size());
  return n;
}

template <typename Scalar>
UNetWeights<Scalar> init_unet(const UNetConfig& config, std::uint64_t seed, InitOptions options) {
  config.validate();
  UNetWeights<Scalar> w;
  w.config = config;
  std::mt19937_64 rng(seed);
  for (const auto& spec : parameter_specs(config)) {
    Tensor<Scalar> t;
    if (spec.fan_in == -1) {
      t = Tensor<Scalar>::constant(spec.shape, Scalar(1));
    } else if (spec.fan_in == 0 || (spec.residual_output && options.zero_residual_outputs)) {
      t = Tensor<Scalar>::zeros(spec.shape);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      t = Tensor<Scalar>::generate(spec.shape, [&](Eigen::Index) { return dist(rng); });
    }
    w.params.emplace(spec.name, std::move(t));
  }
  return w;
}

template <typename Scalar>
ParamVars<Scalar> bind_parameters(const UNetWeights<Scalar>& weights, ad::Tape<Scalar>* tape) {
  ParamVars<Scalar> vars;
  for (const auto& [name, t] : weights.params) {
    vars.emplace(name, tape ? tape->leaf(t) : ad::constant(t));
  }
  return vars;
}

template <typename Scalar>
Tensor<Scalar> timestep_embedding(int t, int dim) {
  const int half = dim / 2;
  Vector<Scalar> e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e[i] = static_cast<Scalar>(std::sin(t * freq));
    e[i + half] = static_cast<Scalar>(std::cos(t * freq));
  }
  return Tensor<Scalar>({dim}, std::move(e));
}

template <typename Scalar>
ad::Var<Scalar> self_attention_forward(const ad::Var<Scalar>& phi, const ParamVars<Scalar>& p,
                                       const std::string& prefix, int groups,
                                       const AttentionHook<Scalar>* hook, const AttentionSite& site) {
  if (phi.value.rank() != 3) throw ShapeError("self_attention: input must be C x H x W");
  const int channels = phi.value.dim(0);
  const int tokens = phi.value.dim(1) * phi.value.dim(2);
  const auto& wq = param(p, prefix + ".q.w");
  if (wq.value.dim(1) != channels) {
    throw ShapeError("self_attention: layer '" + prefix + "' expects " + std::to_string(wq.value.dim(1)) +
                     " channels, got " + std::to_string(channels));
  }
  const int d = wq.value.dim(0);

  auto h = norm(phi, p, prefix + ".norm", groups);
  auto x = ad::transpose(ad::reshape(h, {channels, tokens}));
  auto q = ad::linear(x, wq, param(p, prefix + ".q.b"));
  auto k = ad::linear(x, param(p, prefix + ".k.w"), param(p, prefix + ".k.b"));
  auto v = ad::linear(x, param(p, prefix + ".v.w"), param(p, prefix + ".v.b"));

  Scalar temperature(1);
  if (hook && (hook->capture || hook->override_with)) {
    const AttentionFeatures<Scalar> live{q.value, k.value, v.value};
    if (hook->capture) hook->capture(site, live);
    if (hook->override_with) {
      auto ov = hook->override_with(site, live);
      auto check = [&](const Tensor<Scalar>& t, const char* what) {
        if (t.rank() != 2 || t.dim(1) != d) {
          throw ShapeError(std::string("self_attention: override ") + what + " has shape " +
                           shape_string(t.shape()) + ", expected tokens x " + std::to_string(d));
        }
      };
      if (!ov.query.empty()) {
        check(ov.query, "query");
        if (ov.query.dim(0) != tokens) throw ShapeError("self_attention: override query token count mismatch");
        q = ad::constant(ov.query);
      }
      if (!ov.key.empty()) {
        check(ov.key, "key");
        k = ad::constant(ov.key);
      }
      if (!ov.value.empty()) {
        check(ov.value, "value");
        v = ad::constant(ov.value);
      }
      if (k.value.dim(0) != v.value.dim(0)) throw ShapeError("self_attention: key/value token counts differ");
      if (!(ov.temperature > Scalar(0))) throw RangeError("self_attention: temperature must be positive");
      temperature = ov.temperature;
    }
  }

  const Scalar logit_scale = temperature * (Scalar(1) / std::sqrt(static_cast<Scalar>(d)));
  // Scaling the queries rather than the logits is the same product at a
  // fraction of the cost.
  auto logits = ad::matmul(ad::scale(q, logit_scale), ad::transpose(k));
  if (hook && hook->inspect_logits) hook->inspect_logits(site, logits.value);
  auto attn = ad::softmax_rows(logits);
  auto o = ad::linear(ad::matmul(attn, v), param(p, prefix + ".out.w"), param(p, prefix + ".out.b"));
  return ad::add(phi, ad::reshape(ad::transpose(o), phi.value.shape()));
}

template <typename Scalar>
ad::Var<Scalar> unet_forward(const ad::Var<Scalar>& z_t, int t, const UNetConfig& c,
                             const ParamVars<Scalar>& p, const HookMap<Scalar>& hooks) {
  const Shape expected{c.image_channels, c.resolution, c.resolution};
  if (z_t.value.shape() != expected) {
    throw ShapeError("unet: input " + shape_string(z_t.value.shape()) + ", expected " + shape_string(expected));
  }
  if (t < 1 || t > c.train_steps) {
    throw RangeError("unet: timestep " + std::to_string(t) + " outside [1, " + std::to_string(c.train_steps) + "]");
  }
  const auto registry = attention_registry(c);
  for (const auto& [id, hook] : hooks) {
    if (id < 0 || id >= static_cast<int>(registry.size())) {
      throw ConfigError("unet: hook for unknown attention layer id " + std::to_string(id));
    }
  }
  int next_layer = 0;
  auto attention = [&](const ad::Var<Scalar>& x, const std::string& prefix) {
    const int id = next_layer++;
    auto it = hooks.find(id);
    return self_attention_forward(x, p, prefix, c.groups, it == hooks.end() ? nullptr : &it->second,
                                  AttentionSite{id, t});
  };

  auto temb = ad::constant(timestep_embedding<Scalar>(t, c.time_embed_dim));
  temb = ad::linear(temb, param(p, "time.fc1.w"), param(p, "time.fc1.b"));
  temb = ad::linear(ad::silu(temb), param(p, "time.fc2.w"), param(p, "time.fc2.b"));
  const auto temb_act = ad::silu(temb);

  auto h = conv(z_t, p, "conv_in", 1, 1);
  std::vector<ad::Var<Scalar>> skips;
  for (int i = 0; i < c.levels(); ++i) {
    const auto pre = level_prefix("enc", i);
    h = resblock(h, temb_act, p, pre + ".res", c.groups);
    if (c.has_attention(i)) h = attention(h, pre + ".attn");
    skips.push_back(h);
    if (i + 1 < c.levels()) h = conv(h, p, pre + ".down", 2, 1);
  }
  h = resblock(h, temb_act, p, "mid.res", c.groups);
  h = attention(h, "mid.attn");
  for (int i = c.levels() - 1; i >= 0; --i) {
    const auto pre = level_prefix("dec", i);
    h = ad::add(h, skips[static_cast<std::size_t>(i)]);
    h = resblock(h, temb_act, p, pre + ".res", c.groups);
    if (c.has_attention(i)) h = attention(h, pre + ".attn");
    if (i > 0) h = conv(ad::upsample_nearest2x(h), p, pre + ".up", 1, 1);
  }
  h = ad::silu(norm(h, p, "out.norm", c.groups));
  return conv(h, p, "out.conv", 1, 1);
}

template <typename Scalar>
Tensor<Scalar> unet_forward(const Tensor<Scalar>& z_t, int t, const UNetWeights<Scalar>& weights,
                            const HookMap<Scalar>& hooks) {
  const auto params = bind_parameters<Scalar>(weights, nullptr);
  return unet_forward(ad::constant(z_t), t, weights.config, params, hooks).value;
}

#define STYLEID_INSTANTIATE_UNET(S)                                                                    \
  template struct UNetWeights<S>;                                                                      \
  template UNetWeights<S> init_unet<S>(const UNetConfig&, std::uint64_t, InitOptions);                 \
  template ParamVars<S> bind_parameters(const UNetWeights<S>&, ad::Tape<S>*);                          \
  template Tensor<S> timestep_embedding<S>(int, int);                                                  \
  template ad::Var<S> self_attention_forward(const ad::Var<S>&, const ParamVars<S>&, const std::string&, \
                                             int, const AttentionHook<S>*, const AttentionSite&);      \
  template ad::Var<S> unet_forward(const ad::Var<S>&, int, const UNetConfig&, const ParamVars<S>&,     \
                                   const HookMap<S>&);                                                 \
  template Tensor<S> unet_forward(const Tensor<S>&, int, const UNetWeights<S>&, const HookMap<S>&);

STYLEID_INSTANTIATE_UNET(float)
STYLEID_INSTANTIATE_UNET(double)

#undef STYLEID_INSTANTIATE_UNET

}  // namespace styleid
