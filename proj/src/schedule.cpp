#include "styleid/schedule.hpp"

#include <cmath>

namespace styleid {

NoiseSchedule build_noise_schedule(int train_steps, double beta_min, double beta_max) {
  if (train_steps < 1) throw RangeError("noise schedule: need at least one step");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw RangeError("noise schedule: require 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.train_steps = train_steps;
  s.beta.assign(static_cast<std::size_t>(train_steps) + 1, 0.0);
  s.alpha.assign(s.beta.size(), 1.0);
  s.alpha_bar.assign(s.beta.size(), 1.0);
  for (int t = 1; t <= train_steps; ++t) {
    const double frac = train_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (train_steps - 1);
    const auto i = static_cast<std::size_t>(t);
    s.beta[i] = beta_min + (beta_max - beta_min) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
  }
  return s;
}

template <typename Scalar>
Tensor<Scalar> q_sample(const Tensor<Scalar>& z0, int t, const Tensor<Scalar>& eps,
                        const NoiseSchedule& schedule) {
  if (z0.shape() != eps.shape()) {
    throw ShapeError("q_sample: noise shape " + shape_string(eps.shape()) + " vs " + shape_string(z0.shape()));
  }
  const double ab = schedule.alpha_bar_at(t);
  const auto a = static_cast<Scalar>(std::sqrt(ab));
  const auto b = static_cast<Scalar>(std::sqrt(1.0 - ab));
  return Tensor<Scalar>(z0.shape(), Vector<Scalar>(a * z0.vec() + b * eps.vec()));
}

template Tensor<float> q_sample(const Tensor<float>&, int, const Tensor<float>&, const NoiseSchedule&);
template Tensor<double> q_sample(const Tensor<double>&, int, const Tensor<double>&, const NoiseSchedule&);

}  // namespace styleid
