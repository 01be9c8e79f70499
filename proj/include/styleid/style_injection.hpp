#pragma once

// Training-free style transfer by attention manipulation:
//   1. invert content and style images with DDIM, capturing content queries
//      and style keys/values at the injected attention layers;
//   2. start from the content latent re-normalised to the style latent's
//      channel statistics (initial latent AdaIN);
//   3. sample with the injected layers attending from a blend of content and
//      live queries to the style keys/values, logits sharpened by tau.

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "styleid/ddim.hpp"

namespace styleid {

struct StyleIdConfig {
  double gamma = 0.75;  ///< query preservation: weight of the content query
  double tau = 1.5;     ///< attention temperature on injected layers
  std::optional<std::vector<int>> injected_layers;  ///< unset: decoder attention layers
  int steps = 50;
  bool enable_injection = true;
  bool enable_adain = true;
  bool enable_temperature = true;

  /// Range checks plus layer ids against the model registry.
  void validate(const UNetConfig& model) const;
  /// Sorted, de-duplicated injected layer ids.
  std::vector<int> resolved_layers(const UNetConfig& model) const;
  double effective_tau() const { return enable_temperature ? tau : 1.0; }
};

enum class CacheRole { Content, Style };

const char* to_string(CacheRole role);

/// Features captured during one inversion, keyed by (timestep, layer id).
/// Content caches hold queries; style caches hold keys and values.
template <typename Scalar>
class AttentionCache {
 public:
  using Key = std::pair<int, int>;

  CacheRole role() const { return role_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(int timestep, int layer) const { return entries_.count({timestep, layer}) != 0; }
  /// Throws ConsistencyError when the entry was never captured.
  const AttentionFeatures<Scalar>& at(int timestep, int layer) const;

 private:
  template <typename>
  friend class AttentionCacheBuilder;
  CacheRole role_ = CacheRole::Content;
  std::map<Key, AttentionFeatures<Scalar>> entries_;
};

/// Produces capture hooks and seals the result into an AttentionCache.
template <typename Scalar>
class AttentionCacheBuilder {
 public:
  AttentionCacheBuilder(CacheRole role, std::vector<int> layers);

  /// Capture hooks for every layer; the builder must outlive their use.
  HookMap<Scalar> hooks();
  /// Checks exactly one entry per (step, layer) and hands over the cache.
  AttentionCache<Scalar> build(const StepSchedule& steps) &&;

 private:
  std::vector<int> layers_;
  AttentionCache<Scalar> cache_;
};

template <typename Scalar>
struct Inversion {
  Tensor<Scalar> latent;
  AttentionCache<Scalar> cache;
};

template <typename Scalar>
Inversion<Scalar> invert_with_capture(const Tensor<Scalar>& z_0, const NoisePredictor<Scalar>& net,
                                      const StepSchedule& steps, const NoiseSchedule& schedule, CacheRole role,
                                      const std::vector<int>& layers);

/// Per-channel AdaIN of a C x H x W latent: content normalised, then given the
/// style's channel mean and std (population statistics, double precision).
/// A content channel with std below 1e-6 is clamped and reported via warn().
template <typename Scalar>
Tensor<Scalar> initial_latent_adain(const Tensor<Scalar>& z_c, const Tensor<Scalar>& z_s);

/// gamma * q_c + (1 - gamma) * q_cs.
template <typename Scalar>
Tensor<Scalar> blend_query(const Tensor<Scalar>& q_c, const Tensor<Scalar>& q_cs, double gamma);

/// softmax(tau * q k^T / sqrt(d)) v with d = q columns; same arithmetic as the
/// U-Net attention block under an override.
template <typename Scalar>
Tensor<Scalar> injected_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                                  double tau);

/// Override hooks applying query blending, key/value substitution and tau.
template <typename Scalar>
HookMap<Scalar> injection_hooks(const AttentionCache<Scalar>& content, const AttentionCache<Scalar>& style,
                                const StyleIdConfig& config, const std::vector<int>& layers);

/// The starting latent for stylised sampling.
template <typename Scalar>
Tensor<Scalar> stylized_initial_latent(const Inversion<Scalar>& content, const Inversion<Scalar>& style,
                                       const StyleIdConfig& config);

/// Sampling half of the pipeline, reusing existing inversions. `extra`
/// hooks (e.g. logit inspectors) are merged into the injection hooks.
template <typename Scalar>
Tensor<Scalar> stylize_from_inversions(const Inversion<Scalar>& content, const Inversion<Scalar>& style,
                                       const NoisePredictor<Scalar>& net, const NoiseSchedule& schedule,
                                       const StyleIdConfig& config, const UNetConfig& model,
                                       const HookMap<Scalar>& extra = {});

/// Full pipeline on images in [-1, 1] at model resolution; returns the
/// stylised image clamped to [-1, 1].
template <typename Scalar>
Tensor<Scalar> stylize(const Tensor<Scalar>& content, const Tensor<Scalar>& style, const UNetWeights<Scalar>& weights,
                       const StyleIdConfig& config);

/// Whole-matrix population standard deviation.
template <typename Scalar>
double logit_std(const Tensor<Scalar>& logits);

struct AttentionStdRow {
  int timestep = 0;
  double no_injection = 0;  ///< mean of plain content and plain style sampling
  double injected = 0;      ///< injection with tau = 1
  double scaled = 0;        ///< the same logits multiplied by tau
};

/// One row per scheduled step in sampling order (high noise first). Each
/// value is the mean over injected layers of the logit std at that step.
template <typename Scalar>
std::vector<AttentionStdRow> attention_std_report(const Inversion<Scalar>& content, const Inversion<Scalar>& style,
                                                  const NoisePredictor<Scalar>& net, const NoiseSchedule& schedule,
                                                  const StyleIdConfig& config, const UNetConfig& model);

template <typename Scalar>
std::vector<AttentionStdRow> attention_std_report(const Tensor<Scalar>& content, const Tensor<Scalar>& style,
                                                  const UNetWeights<Scalar>& weights, const StyleIdConfig& config);

}  // namespace styleid
