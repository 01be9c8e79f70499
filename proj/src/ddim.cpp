#include "styleid/ddim.hpp"

#include <cmath>
#include <string>

namespace styleid {

StepSchedule make_step_schedule(int steps, int train_steps) {
  if (steps < 1 || steps > train_steps) {
    throw RangeError("step schedule: need 1 <= steps <= " + std::to_string(train_steps) + ", got " +
                     std::to_string(steps));
  }
  StepSchedule s;
  s.timesteps.reserve(static_cast<std::size_t>(steps));
  for (int i = 1; i <= steps; ++i) {
    s.timesteps.push_back(static_cast<int>(static_cast<long long>(i) * train_steps / steps));
  }
  return s;
}

void validate(const StepSchedule& steps, int train_steps) {
  if (steps.timesteps.empty()) throw RangeError("step schedule: empty");
  int prev = 0;
  for (int t : steps.timesteps) {
    if (t <= prev) throw OrderingError("step schedule: timesteps must be strictly increasing");
    if (t > train_steps) throw RangeError("step schedule: timestep " + std::to_string(t) + " beyond training range");
    prev = t;
  }
}

template <typename Scalar>
Tensor<Scalar> ddim_transfer(const Tensor<Scalar>& z, const Tensor<Scalar>& eps, int from, int to,
                             const NoiseSchedule& schedule) {
  if (z.shape() != eps.shape()) {
    throw ShapeError("ddim: noise " + shape_string(eps.shape()) + " vs latent " + shape_string(z.shape()));
  }
  if (from == to) return z;
  const double ab_from = schedule.alpha_bar_at(from);
  const double ab_to = schedule.alpha_bar_at(to);
  const double c_z = std::sqrt(ab_to / ab_from);
  const double c_eps = std::sqrt(1.0 - ab_to) - std::sqrt(ab_to) * std::sqrt(1.0 - ab_from) / std::sqrt(ab_from);
  Vector<Scalar> out(z.size());
  const auto zs = z.data();
  const auto es = eps.data();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = static_cast<Scalar>(c_z * static_cast<double>(zs[static_cast<std::size_t>(i)]) +
                                 c_eps * static_cast<double>(es[static_cast<std::size_t>(i)]));
  }
  return Tensor<Scalar>(z.shape(), std::move(out));
}

template <typename Scalar>
Tensor<Scalar> ddim_step(const Tensor<Scalar>& z_t, const Tensor<Scalar>& eps, int t, int t_prev,
                         const NoiseSchedule& schedule) {
  if (t_prev > t) {
    throw OrderingError("ddim_step: t_prev " + std::to_string(t_prev) + " after t " + std::to_string(t));
  }
  return ddim_transfer(z_t, eps, t, t_prev, schedule);
}

template <typename Scalar>
NoisePredictor<Scalar> unet_predictor(const UNetWeights<Scalar>& weights) {
  return [&weights](const Tensor<Scalar>& z, int t, const HookMap<Scalar>& hooks) {
    return unet_forward(z, t, weights, hooks);
  };
}

template <typename Scalar>
Tensor<Scalar> ddim_sample(const Tensor<Scalar>& z_T, const NoisePredictor<Scalar>& net,
                           const StepSchedule& steps, const NoiseSchedule& schedule,
                           const HookMap<Scalar>& hooks) {
  validate(steps, schedule.train_steps);
  Tensor<Scalar> z = z_T;
  for (int i = steps.steps(); i >= 1; --i) {
    const int t = steps.at(i);
    z = ddim_step(z, net(z, t, hooks), t, steps.at(i - 1), schedule);
  }
  return z;
}

template <typename Scalar>
Tensor<Scalar> ddim_invert(const Tensor<Scalar>& z_0, const NoisePredictor<Scalar>& net,
                           const StepSchedule& steps, const NoiseSchedule& schedule,
                           const HookMap<Scalar>& hooks) {
  validate(steps, schedule.train_steps);
  Tensor<Scalar> z = z_0;
  for (int i = 1; i <= steps.steps(); ++i) {
    const int t = steps.at(i);
    z = ddim_transfer(z, net(z, t, hooks), steps.at(i - 1), t, schedule);
  }
  return z;
}

#define STYLEID_INSTANTIATE(S)                                                                            \
  template Tensor<S> ddim_transfer(const Tensor<S>&, const Tensor<S>&, int, int, const NoiseSchedule&); \
  template Tensor<S> ddim_step(const Tensor<S>&, const Tensor<S>&, int, int, const NoiseSchedule&);     \
  template NoisePredictor<S> unet_predictor(const UNetWeights<S>&);                                     \
  template Tensor<S> ddim_sample(const Tensor<S>&, const NoisePredictor<S>&, const StepSchedule&,       \
                                 const NoiseSchedule&, const HookMap<S>&);                              \
  template Tensor<S> ddim_invert(const Tensor<S>&, const NoisePredictor<S>&, const StepSchedule&,       \
                                 const NoiseSchedule&, const HookMap<S>&);

STYLEID_INSTANTIATE(float)
STYLEID_INSTANTIATE(double)
#undef STYLEID_INSTANTIATE

}  // namespace styleid
