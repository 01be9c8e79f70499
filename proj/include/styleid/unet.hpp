#pragma once

// Small unconditional U-Net noise predictor with single-head self-attention.
//
// Each attention block carries a stable layer id. Callers can attach an
// AttentionHook per id to read the projected query/key/value tokens, to
// replace them (and the softmax temperature) before the attention product,
// or to inspect the pre-softmax logits. Without a hook, or with a hook
// that has no callbacks, the block computes plain self-attention.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "styleid/autodiff.hpp"

namespace styleid {

struct UNetConfig {
  int image_channels = 3;
  int resolution = 64;
  int base_channels = 32;
  std::vector<int> channel_mult{1, 1, 2};
  /// Resolutions whose encoder/decoder blocks carry self-attention. The
  /// bottleneck always has one.
  std::vector<int> attention_resolutions{32, 16};
  int groups = 8;
  int time_embed_dim = 128;
  int train_steps = 1000;

  int levels() const { return static_cast<int>(channel_mult.size()); }
  int channels_at(int level) const { return base_channels * channel_mult.at(static_cast<std::size_t>(level)); }
  int resolution_at(int level) const { return resolution >> level; }
  bool has_attention(int level) const;
  void validate() const;

  bool operator==(const UNetConfig&) const = default;
};

enum class LayerPosition { Encoder, Bottleneck, Decoder };

const char* to_string(LayerPosition p);

struct AttentionLayerInfo {
  int id = 0;
  LayerPosition position = LayerPosition::Encoder;
  int resolution = 0;
  int channels = 0;
  std::string name;  ///< parameter prefix, e.g. "dec1.attn"
};

/// Attention layers in forward order; ids are their index.
std::vector<AttentionLayerInfo> attention_registry(const UNetConfig& config);

/// Ids of all decoder-side attention layers.
std::vector<int> decoder_attention_layers(const UNetConfig& config);

template <typename Scalar>
struct UNetWeights {
  UNetConfig config;
  std::map<std::string, Tensor<Scalar>> params;

  const Tensor<Scalar>& at(const std::string& name) const;
  std::size_t parameter_count() const;
  std::vector<AttentionLayerInfo> attention_layers() const { return attention_registry(config); }
};

struct InitOptions {
  /// Zero the last conv of each residual branch, the attention output
  /// projections and the output conv, so a fresh model predicts zero noise.
  bool zero_residual_outputs = true;
};

template <typename Scalar>
UNetWeights<Scalar> init_unet(const UNetConfig& config, std::uint64_t seed, InitOptions options = {});

// ---------------------------------------------------------------------------
// Attention hooks

struct AttentionSite {
  int layer_id = 0;
  int timestep = 0;
};

/// Projected token features of one attention call, each tokens x d.
template <typename Scalar>
struct AttentionFeatures {
  Tensor<Scalar> query;
  Tensor<Scalar> key;
  Tensor<Scalar> value;
};

/// Replacement features. Empty tensors keep the live projection.
template <typename Scalar>
struct AttentionOverride {
  Tensor<Scalar> query;
  Tensor<Scalar> key;
  Tensor<Scalar> value;
  Scalar temperature = Scalar(1);
};

enum class HookMode { Pass, Capture, Override };

template <typename Scalar>
struct AttentionHook {
  /// Called with the live projections, before any override.
  std::function<void(const AttentionSite&, const AttentionFeatures<Scalar>&)> capture;
  /// Supplies replacement features and temperature for the attention product.
  std::function<AttentionOverride<Scalar>(const AttentionSite&, const AttentionFeatures<Scalar>&)> override_with;
  /// Observes the temperature-scaled pre-softmax logits.
  std::function<void(const AttentionSite&, const Tensor<Scalar>&)> inspect_logits;

  HookMode mode() const {
    if (override_with) return HookMode::Override;
    if (capture) return HookMode::Capture;
    return HookMode::Pass;
  }
};

template <typename Scalar>
using HookMap = std::map<int, AttentionHook<Scalar>>;

// ---------------------------------------------------------------------------
// Forward passes

template <typename Scalar>
using ParamVars = std::map<std::string, ad::Var<Scalar>>;

/// Wraps every parameter as a tape leaf (tape != nullptr) or as a constant.
template <typename Scalar>
ParamVars<Scalar> bind_parameters(const UNetWeights<Scalar>& weights, ad::Tape<Scalar>* tape);

/// One self-attention block: residual + single-head attention over the
/// H*W tokens of a C x H x W feature map, with the hook applied between
/// projection and the attention product.
template <typename Scalar>
ad::Var<Scalar> self_attention_forward(const ad::Var<Scalar>& phi, const ParamVars<Scalar>& params,
                                       const std::string& prefix, int groups,
                                       const AttentionHook<Scalar>* hook, const AttentionSite& site);

/// Noise prediction for a C x H x W input at timestep t (1..train_steps).
template <typename Scalar>
ad::Var<Scalar> unet_forward(const ad::Var<Scalar>& z_t, int t, const UNetConfig& config,
                             const ParamVars<Scalar>& params, const HookMap<Scalar>& hooks);

template <typename Scalar>
Tensor<Scalar> unet_forward(const Tensor<Scalar>& z_t, int t, const UNetWeights<Scalar>& weights,
                            const HookMap<Scalar>& hooks = {});

/// Sinusoidal timestep features (sin half, then cos half).
template <typename Scalar>
Tensor<Scalar> timestep_embedding(int t, int dim);

}  // namespace styleid
