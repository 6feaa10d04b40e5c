#pragma once

#include <vector>

#include "touchadd/nn/tensor.hpp"

namespace touchadd::editor {

/// Linear beta schedule over steps t = 1..T. Step 0 is the clean image:
/// alpha_bar(0) = 1.
class DiffusionSchedule {
 public:
  /// Betas run linearly from beta_start to beta_end.
  DiffusionSchedule(int steps, double beta_start, double beta_end);

  /// The usual 1e-4..0.02 range over 1000 steps, rescaled by 1000 / steps so
  /// shorter chains still end near pure noise.
  static DiffusionSchedule linear(int steps = 200);

  int steps() const noexcept { return steps_; }
  double beta(int t) const;
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const;
  /// Variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const;

  /// sqrt(abar) x0 + sqrt(1 - abar) eps.
  nn::Mat q_sample(const nn::Mat& x0, int t, const nn::Mat& eps) const;
  /// Inverse of q_sample given the noise.
  nn::Mat predict_x0(const nn::Mat& xt, int t, const nn::Mat& eps) const;
  /// Mean of q(x_{t-1} | x_t, x_0).
  nn::Mat posterior_mean(const nn::Mat& x0, const nn::Mat& xt, int t) const;

 private:
  int steps_;
  std::vector<double> betas_;      // index t - 1
  std::vector<double> alpha_bar_;  // index t, alpha_bar_[0] = 1
};

}  // namespace touchadd::editor
