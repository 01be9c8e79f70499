#pragma once

// Deterministic DDIM (eta = 0) sampling and inversion over a strided subset
// of the training timesteps.

#include <functional>
#include <vector>

#include "styleid/schedule.hpp"
#include "styleid/unet.hpp"

namespace styleid {

/// Timesteps t_1 < ... < t_S with t_i = floor(i * T / S), so t_S = T.
struct StepSchedule {
  std::vector<int> timesteps;

  int steps() const { return static_cast<int>(timesteps.size()); }
  /// t_i for i in 0..S, with t_0 = 0 (the clean sample).
  int at(int i) const { return i == 0 ? 0 : timesteps.at(static_cast<std::size_t>(i - 1)); }
};

StepSchedule make_step_schedule(int steps, int train_steps);

/// Checks strict increase and the [1, train_steps] range.
void validate(const StepSchedule& steps, int train_steps);

/// z_{t_prev} = sqrt(ab_prev) (z_t - sqrt(1 - ab_t) eps) / sqrt(ab_t) + sqrt(1 - ab_prev) eps.
/// Coefficients are evaluated in double per element. t_prev == t returns z_t;
/// t_prev > t throws OrderingError.
template <typename Scalar>
Tensor<Scalar> ddim_step(const Tensor<Scalar>& z_t, const Tensor<Scalar>& eps, int t, int t_prev,
                         const NoiseSchedule& schedule);

/// The DDIM map from timestep `from` to timestep `to` in either direction.
template <typename Scalar>
Tensor<Scalar> ddim_transfer(const Tensor<Scalar>& z, const Tensor<Scalar>& eps, int from, int to,
                             const NoiseSchedule& schedule);

/// Anything that predicts noise from (z_t, t), consulting attention hooks.
template <typename Scalar>
using NoisePredictor = std::function<Tensor<Scalar>(const Tensor<Scalar>&, int, const HookMap<Scalar>&)>;

template <typename Scalar>
NoisePredictor<Scalar> unet_predictor(const UNetWeights<Scalar>& weights);

/// Walks t_S -> t_{S-1} -> ... -> 0. The network runs at each t_i with the
/// current latent and the same hooks map.
template <typename Scalar>
Tensor<Scalar> ddim_sample(const Tensor<Scalar>& z_T, const NoisePredictor<Scalar>& net,
                           const StepSchedule& steps, const NoiseSchedule& schedule,
                           const HookMap<Scalar>& hooks = {});

/// Walks 0 -> t_1 -> ... -> t_S. Step i evaluates the network on the
/// lower-noise latent z_{t_{i-1}} but labelled with timestep t_i, so the
/// features seen by hooks during inversion line up with those seen at
/// t_i during sampling.
template <typename Scalar>
Tensor<Scalar> ddim_invert(const Tensor<Scalar>& z_0, const NoisePredictor<Scalar>& net,
                           const StepSchedule& steps, const NoiseSchedule& schedule,
                           const HookMap<Scalar>& hooks = {});

}  // namespace styleid
