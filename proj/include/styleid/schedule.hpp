#pragma once

#include <vector>

#include "styleid/tensor.hpp"

namespace styleid {

/// Per-timestep variance tables for forward noising. Index 0 is the clean
/// sample (beta 0, alpha_bar 1); indices 1..train_steps follow a linear beta ramp.
struct NoiseSchedule {
  int train_steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double alpha_bar_at(int t) const {
    if (t < 0 || t > train_steps) {
      throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(train_steps) + "]");
    }
    return alpha_bar[static_cast<std::size_t>(t)];
  }
};

NoiseSchedule build_noise_schedule(int train_steps = 1000, double beta_min = 1e-4, double beta_max = 0.02);

/// z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps.
template <typename Scalar>
Tensor<Scalar> q_sample(const Tensor<Scalar>& z0, int t, const Tensor<Scalar>& eps,
                        const NoiseSchedule& schedule);

}  // namespace styleid
