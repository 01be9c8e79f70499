#include "styleid/style_injection.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "styleid/ops.hpp"
#include "styleid/warnings.hpp"

namespace styleid {

void StyleIdConfig::validate(const UNetConfig& model) const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw RangeError("gamma must lie in [0, 1], got " + std::to_string(gamma));
  if (!(tau >= 1.0 && std::isfinite(tau))) throw RangeError("tau must be >= 1, got " + std::to_string(tau));
  if (steps < 1 || steps > model.train_steps) {
    throw RangeError("steps must lie in [1, " + std::to_string(model.train_steps) + "], got " + std::to_string(steps));
  }
  resolved_layers(model);
}

std::vector<int> StyleIdConfig::resolved_layers(const UNetConfig& model) const {
  if (!injected_layers) return decoder_attention_layers(model);
  const auto registry = attention_registry(model);
  std::set<int> ids(injected_layers->begin(), injected_layers->end());
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(registry.size())) {
      throw ConfigError("injected layer " + std::to_string(id) + " is not an attention layer of the model (0.." +
                        std::to_string(static_cast<int>(registry.size()) - 1) + ")");
    }
  }
  return {ids.begin(), ids.end()};
}

const char* to_string(CacheRole role) { return role == CacheRole::Content ? "content" : "style"; }

template <typename Scalar>
const AttentionFeatures<Scalar>& AttentionCache<Scalar>::at(int timestep, int layer) const {
  auto it = entries_.find({timestep, layer});
  if (it == entries_.end()) {
    throw ConsistencyError(std::string(to_string(role_)) + " cache has no entry for t=" + std::to_string(timestep) +
                           " layer=" + std::to_string(layer));
  }
  return it->second;
}

template <typename Scalar>
AttentionCacheBuilder<Scalar>::AttentionCacheBuilder(CacheRole role, std::vector<int> layers)
    : layers_(std::move(layers)) {
  cache_.role_ = role;
}

template <typename Scalar>
HookMap<Scalar> AttentionCacheBuilder<Scalar>::hooks() {
  HookMap<Scalar> out;
  for (int id : layers_) {
    AttentionHook<Scalar> h;
    h.capture = [this](const AttentionSite& site, const AttentionFeatures<Scalar>& f) {
      AttentionFeatures<Scalar> kept;
      if (cache_.role_ == CacheRole::Content) {
        kept.query = f.query;
      } else {
        kept.key = f.key;
        kept.value = f.value;
      }
      if (!cache_.entries_.emplace(std::make_pair(site.timestep, site.layer_id), std::move(kept)).second) {
        throw ConsistencyError("attention cache: duplicate capture at t=" + std::to_string(site.timestep) +
                               " layer=" + std::to_string(site.layer_id));
      }
    };
    out.emplace(id, std::move(h));
  }
  return out;
}

template <typename Scalar>
AttentionCache<Scalar> AttentionCacheBuilder<Scalar>::build(const StepSchedule& steps) && {
  for (int t : steps.timesteps) {
    for (int id : layers_) cache_.at(t, id);
  }
  if (cache_.size() != steps.timesteps.size() * layers_.size()) {
    throw ConsistencyError("attention cache: captured entries outside the step schedule");
  }
  return std::move(cache_);
}

template <typename Scalar>
Inversion<Scalar> invert_with_capture(const Tensor<Scalar>& z_0, const NoisePredictor<Scalar>& net,
                                      const StepSchedule& steps, const NoiseSchedule& schedule, CacheRole role,
                                      const std::vector<int>& layers) {
  AttentionCacheBuilder<Scalar> builder(role, layers);
  auto latent = ddim_invert(z_0, net, steps, schedule, builder.hooks());
  return {std::move(latent), std::move(builder).build(steps)};
}

namespace {

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;
};

template <typename Scalar>
ChannelStats channel_stats(const Tensor<Scalar>& z) {
  const int c = z.dim(0);
  const Eigen::Index n = z.size() / c;
  ChannelStats s;
  const auto data = z.data();
  for (int ch = 0; ch < c; ++ch) {
    const Scalar* p = data.data() + ch * n;
    double sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) sum += p[i];
    const double mean = sum / static_cast<double>(n);
    double sq = 0;
    for (Eigen::Index i = 0; i < n; ++i) sq += (p[i] - mean) * (p[i] - mean);
    s.mean.push_back(mean);
    s.std.push_back(std::sqrt(sq / static_cast<double>(n)));
  }
  return s;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> initial_latent_adain(const Tensor<Scalar>& z_c, const Tensor<Scalar>& z_s) {
  if (z_c.shape() != z_s.shape() || z_c.rank() != 3) {
    throw ShapeError("adain: need equal C x H x W shapes, got " + shape_string(z_c.shape()) + " and " +
                     shape_string(z_s.shape()));
  }
  constexpr double min_std = 1e-6;
  const auto sc = channel_stats(z_c);
  const auto ss = channel_stats(z_s);
  const int c = z_c.dim(0);
  const Eigen::Index n = z_c.size() / c;
  Vector<Scalar> out(z_c.size());
  const auto data = z_c.data();
  for (int ch = 0; ch < c; ++ch) {
    double sigma = sc.std[static_cast<std::size_t>(ch)];
    if (sigma < min_std) {
      warn("adain: content channel " + std::to_string(ch) + " has std " + std::to_string(sigma) +
           ", clamped to 1e-6");
      sigma = min_std;
    }
    const double gain = ss.std[static_cast<std::size_t>(ch)] / sigma;
    const double mu_c = sc.mean[static_cast<std::size_t>(ch)];
    const double mu_s = ss.mean[static_cast<std::size_t>(ch)];
    for (Eigen::Index i = ch * n; i < (ch + 1) * n; ++i) {
      out[i] = static_cast<Scalar>(gain * (data[static_cast<std::size_t>(i)] - mu_c) + mu_s);
    }
  }
  return Tensor<Scalar>(z_c.shape(), std::move(out));
}

template <typename Scalar>
Tensor<Scalar> blend_query(const Tensor<Scalar>& q_c, const Tensor<Scalar>& q_cs, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw RangeError("blend_query: gamma " + std::to_string(gamma));
  if (q_c.shape() != q_cs.shape()) {
    throw ShapeError("blend_query: " + shape_string(q_c.shape()) + " vs " + shape_string(q_cs.shape()));
  }
  Vector<Scalar> out =
      (gamma * q_c.vec().template cast<double>() + (1.0 - gamma) * q_cs.vec().template cast<double>())
          .template cast<Scalar>();
  return Tensor<Scalar>(q_c.shape(), std::move(out));
}

template <typename Scalar>
Tensor<Scalar> injected_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                                  double tau) {
  if (!(tau >= 1.0)) throw RangeError("injected_attention: tau must be >= 1");
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0)) {
    throw ShapeError("injected_attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) +
                     ", v " + shape_string(v.shape()));
  }
  const Scalar s = static_cast<Scalar>(tau) * (Scalar(1) / std::sqrt(static_cast<Scalar>(q.dim(1))));
  return matmul(softmax_rows(matmul(scale(q, s), transpose(k))), v);
}

template <typename Scalar>
HookMap<Scalar> injection_hooks(const AttentionCache<Scalar>& content, const AttentionCache<Scalar>& style,
                                const StyleIdConfig& config, const std::vector<int>& layers) {
  if (content.role() != CacheRole::Content || style.role() != CacheRole::Style) {
    throw ConsistencyError("injection: cache roles swapped");
  }
  const double gamma = config.gamma;
  const auto tau = static_cast<Scalar>(config.effective_tau());
  HookMap<Scalar> hooks;
  for (int id : layers) {
    AttentionHook<Scalar> h;
    h.override_with = [&content, &style, gamma, tau](const AttentionSite& site, const AttentionFeatures<Scalar>& live) {
      const auto& s = style.at(site.timestep, site.layer_id);
      AttentionOverride<Scalar> ov;
      ov.query = blend_query(content.at(site.timestep, site.layer_id).query, live.query, gamma);
      ov.key = s.key;
      ov.value = s.value;
      ov.temperature = tau;
      return ov;
    };
    hooks.emplace(id, std::move(h));
  }
  return hooks;
}

template <typename Scalar>
Tensor<Scalar> stylized_initial_latent(const Inversion<Scalar>& content, const Inversion<Scalar>& style,
                                       const StyleIdConfig& config) {
  return config.enable_adain ? initial_latent_adain(content.latent, style.latent) : content.latent;
}

namespace {

template <typename Scalar>
HookMap<Scalar> merge_hooks(HookMap<Scalar> base, const HookMap<Scalar>& extra) {
  for (const auto& [id, h] : extra) {
    auto& dst = base[id];
    if (h.capture) dst.capture = h.capture;
    if (h.override_with) {
      if (dst.override_with) throw ConfigError("hooks: two overrides for layer " + std::to_string(id));
      dst.override_with = h.override_with;
    }
    if (h.inspect_logits) dst.inspect_logits = h.inspect_logits;
  }
  return base;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> stylize_from_inversions(const Inversion<Scalar>& content, const Inversion<Scalar>& style,
                                       const NoisePredictor<Scalar>& net, const NoiseSchedule& schedule,
                                       const StyleIdConfig& config, const UNetConfig& model,
                                       const HookMap<Scalar>& extra) {
  config.validate(model);
  const auto steps = make_step_schedule(config.steps, model.train_steps);
  HookMap<Scalar> hooks;
  if (config.enable_injection) hooks = injection_hooks(content.cache, style.cache, config, config.resolved_layers(model));
  return ddim_sample(stylized_initial_latent(content, style, config), net, steps, schedule, merge_hooks(hooks, extra));
}

namespace {

template <typename Scalar>
void check_image(const Tensor<Scalar>& image, const UNetConfig& model, const char* what) {
  const Shape expected{model.image_channels, model.resolution, model.resolution};
  if (image.shape() != expected) {
    throw ConfigError(std::string(what) + " image is " + shape_string(image.shape()) + ", model expects " +
                      shape_string(expected));
  }
}

template <typename Scalar>
std::pair<Inversion<Scalar>, Inversion<Scalar>> invert_pair(const Tensor<Scalar>& content,
                                                           const Tensor<Scalar>& style,
                                                           const UNetWeights<Scalar>& weights,
                                                           const NoiseSchedule& schedule,
                                                           const StyleIdConfig& config) {
  const auto& model = weights.config;
  config.validate(model);
  check_image(content, model, "content");
  check_image(style, model, "style");
  const auto steps = make_step_schedule(config.steps, model.train_steps);
  const auto layers = config.resolved_layers(model);
  const auto net = unet_predictor(weights);
  auto c = invert_with_capture(content, net, steps, schedule, CacheRole::Content, layers);
  auto s = invert_with_capture(style, net, steps, schedule, CacheRole::Style, layers);
  return {std::move(c), std::move(s)};
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> stylize(const Tensor<Scalar>& content, const Tensor<Scalar>& style, const UNetWeights<Scalar>& weights,
                       const StyleIdConfig& config) {
  const auto schedule = build_noise_schedule(weights.config.train_steps);
  const auto [c, s] = invert_pair(content, style, weights, schedule, config);
  auto out = stylize_from_inversions(c, s, unet_predictor(weights), schedule, config, weights.config);
  return Tensor<Scalar>(out.shape(), Vector<Scalar>(out.vec().cwiseMax(Scalar(-1)).cwiseMin(Scalar(1))));
}

template <typename Scalar>
double logit_std(const Tensor<Scalar>& logits) {
  const auto n = static_cast<double>(logits.size());
  const auto data = logits.data();
  double sum = 0;
  for (Scalar x : data) sum += x;
  const double mean = sum / n;
  double sq = 0;
  for (Scalar x : data) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / n);
}

namespace {

/// Accumulates, per timestep, the mean over layers of the logit std, once
/// for each multiplier applied to the logits.
template <typename Scalar>
struct StdRecorder {
  std::vector<Scalar> factors{Scalar(1)};
  std::map<int, std::vector<double>> sums;
  std::map<int, int> counts;

  HookMap<Scalar> hooks(const std::vector<int>& layers) {
    HookMap<Scalar> out;
    for (int id : layers) {
      AttentionHook<Scalar> h;
      h.inspect_logits = [this](const AttentionSite& site, const Tensor<Scalar>& logits) {
        auto& acc = sums[site.timestep];
        acc.resize(factors.size(), 0.0);
        for (std::size_t f = 0; f < factors.size(); ++f) {
          acc[f] += factors[f] == Scalar(1)
                        ? logit_std(logits)
                        : logit_std(Tensor<Scalar>(logits.shape(), Vector<Scalar>(factors[f] * logits.vec())));
        }
        ++counts[site.timestep];
      };
      out.emplace(id, std::move(h));
    }
    return out;
  }

  double mean_at(int t, std::size_t factor = 0) const { return sums.at(t).at(factor) / counts.at(t); }
};

}  // namespace

template <typename Scalar>
std::vector<AttentionStdRow> attention_std_report(const Inversion<Scalar>& content, const Inversion<Scalar>& style,
                                                  const NoisePredictor<Scalar>& net, const NoiseSchedule& schedule,
                                                  const StyleIdConfig& config, const UNetConfig& model) {
  config.validate(model);
  const auto steps = make_step_schedule(config.steps, model.train_steps);
  const auto layers = config.resolved_layers(model);

  StdRecorder<Scalar> plain_c, plain_s, injected;
  injected.factors.push_back(static_cast<Scalar>(config.tau));
  ddim_sample(content.latent, net, steps, schedule, plain_c.hooks(layers));
  ddim_sample(style.latent, net, steps, schedule, plain_s.hooks(layers));

  StyleIdConfig unit = config;
  unit.enable_injection = true;
  unit.enable_temperature = false;
  stylize_from_inversions(content, style, net, schedule, unit, model,
                          injected.hooks(layers));

  std::vector<AttentionStdRow> rows;
  for (int i = steps.steps(); i >= 1; --i) {
    const int t = steps.at(i);
    rows.push_back({t, 0.5 * (plain_c.mean_at(t) + plain_s.mean_at(t)), injected.mean_at(t, 0), injected.mean_at(t, 1)});
  }
  return rows;
}

template <typename Scalar>
std::vector<AttentionStdRow> attention_std_report(const Tensor<Scalar>& content, const Tensor<Scalar>& style,
                                                  const UNetWeights<Scalar>& weights, const StyleIdConfig& config) {
  const auto schedule = build_noise_schedule(weights.config.train_steps);
  const auto [c, s] = invert_pair(content, style, weights, schedule, config);
  return attention_std_report(c, s, unet_predictor(weights), schedule, config, weights.config);
}

#define STYLEID_INSTANTIATE(S)                                                                                  \
  template class AttentionCache<S>;                                                                          \
  template class AttentionCacheBuilder<S>;                                                                   \
  template Inversion<S> invert_with_capture(const Tensor<S>&, const NoisePredictor<S>&, const StepSchedule&,  \
                                            const NoiseSchedule&, CacheRole, const std::vector<int>&);        \
  template Tensor<S> initial_latent_adain(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> blend_query(const Tensor<S>&, const Tensor<S>&, double);                                 \
  template Tensor<S> injected_attention(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, double);        \
  template HookMap<S> injection_hooks(const AttentionCache<S>&, const AttentionCache<S>&, const StyleIdConfig&, \
                                      const std::vector<int>&);                                               \
  template Tensor<S> stylized_initial_latent(const Inversion<S>&, const Inversion<S>&, const StyleIdConfig&); \
  template Tensor<S> stylize_from_inversions(const Inversion<S>&, const Inversion<S>&, const NoisePredictor<S>&, \
                                             const NoiseSchedule&, const StyleIdConfig&, const UNetConfig&,   \
                                             const HookMap<S>&);                                              \
  template Tensor<S> stylize(const Tensor<S>&, const Tensor<S>&, const UNetWeights<S>&, const StyleIdConfig&); \
  template double logit_std(const Tensor<S>&);                                                                \
  template std::vector<AttentionStdRow> attention_std_report(const Inversion<S>&, const Inversion<S>&,        \
                                                             const NoisePredictor<S>&, const NoiseSchedule&,  \
                                                             const StyleIdConfig&, const UNetConfig&);        \
  template std::vector<AttentionStdRow> attention_std_report(const Tensor<S>&, const Tensor<S>&,              \
                                                             const UNetWeights<S>&, const StyleIdConfig&);

STYLEID_INSTANTIATE(float)
STYLEID_INSTANTIATE(double)
#undef STYLEID_INSTANTIATE

}  // namespace styleid
