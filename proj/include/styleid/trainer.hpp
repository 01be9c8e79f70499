#pragma once

// Noise-prediction training for the toy U-Net: Adam with linear warm-up,
// global-norm gradient clipping and an exponential moving average of the
// weights (the EMA copy is what gets saved and used for inference).

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "styleid/dataset.hpp"
#include "styleid/ddim.hpp"

namespace styleid {

using Rng = std::mt19937_64;

struct TrainConfig {
  ProceduralSpec data;
  UNetConfig model;
  std::uint64_t seed = 1;
  int steps = 4000;
  int batch_size = 16;
  int steps_per_epoch = 100;
  double learning_rate = 5e-4;
  int warmup_steps = 100;
  bool cosine_decay = true;  ///< after warm-up, cosine from learning_rate down to 10% of it
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  double ema_decay = 0.999;
  int val_draws = 4;  ///< fixed (t, noise) draws per validation image
  double divergence_factor = 10.0;
  int divergence_patience = 3;
  std::string checkpoint = "models/toy_unet.ckpt";
  std::string loss_csv = "models/loss.csv";
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Learning rate used for optimiser step `step` (1-based).
double learning_rate_at(const TrainConfig& config, int step);

struct NoiseDraw {
  int t = 1;
  TensorF eps;
};

/// t uniform in [1, train_steps], eps unit Gaussian of the given shape.
NoiseDraw draw_noise(const Shape& shape, int train_steps, Rng& rng);

/// Mean over the batch of mean((eps - net(q_sample(x, t, eps), t))^2).
double diffusion_loss(const NoisePredictor<float>& net, const std::vector<TensorF>& batch,
                      const std::vector<NoiseDraw>& draws, const NoiseSchedule& schedule);

struct AdamMoments {
  std::map<std::string, Vector<float>> m, v;
};

struct TrainState {
  UNetWeights<float> weights;
  UNetWeights<float> ema;
  AdamMoments moments;
  int step = 0;
};

TrainState init_train_state(const TrainConfig& config);

struct StepResult {
  double loss = 0;
  double grad_norm = 0;  ///< before clipping
};

/// One optimiser update on a batch of model-range images. Throws
/// NumericError on a non-finite loss or gradient.
StepResult training_step(TrainState& state, const std::vector<TensorF>& batch, const NoiseSchedule& schedule,
                         Rng& rng, const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  int step = 0;
  double train_loss = 0;
  double val_loss = 0;
  double seconds = 0;
};

struct TrainResult {
  UNetWeights<float> ema;
  double initial_val_loss = 0;
  std::vector<EpochRecord> history;
};

/// Generates the dataset, trains on the union of content and style training
/// images, evaluates the EMA weights on fixed validation draws after every
/// epoch and aborts with NumericError when the validation loss stays above
/// divergence_factor x its initial value for divergence_patience epochs.
/// Writes the checkpoint and loss CSV when their paths are non-empty.
TrainResult train(const TrainConfig& config, const std::function<void(const EpochRecord&)>& progress = {});

}  // namespace styleid
