#include "touchadd/editor/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace touchadd::editor {

DiffusionSchedule::DiffusionSchedule(int steps, double beta_start, double beta_end) : steps_(steps) {
  if (steps < 1) throw std::invalid_argument("diffusion needs at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
    throw std::invalid_argument("betas must satisfy 0 < start <= end < 1");
  betas_.resize(static_cast<std::size_t>(steps));
  alpha_bar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  for (int i = 0; i < steps; ++i) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas_[static_cast<std::size_t>(i)] = beta_start + f * (beta_end - beta_start);
    alpha_bar_[static_cast<std::size_t>(i) + 1] =
        alpha_bar_[static_cast<std::size_t>(i)] * (1.0 - betas_[static_cast<std::size_t>(i)]);
  }
}

DiffusionSchedule DiffusionSchedule::linear(int steps) {
  const double s = 1000.0 / steps;
  return DiffusionSchedule(steps, 1e-4 * s, std::min(0.02 * s, 0.999));
}

double DiffusionSchedule::beta(int t) const {
  if (t < 1 || t > steps_) throw std::out_of_range("diffusion step " + std::to_string(t));
  return betas_[static_cast<std::size_t>(t) - 1];
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps_) throw std::out_of_range("diffusion step " + std::to_string(t));
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double DiffusionSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

nn::Mat DiffusionSchedule::q_sample(const nn::Mat& x0, int t, const nn::Mat& eps) const {
  const double ab = alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

nn::Mat DiffusionSchedule::predict_x0(const nn::Mat& xt, int t, const nn::Mat& eps) const {
  const double ab = alpha_bar(t);
  return (xt - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
}

nn::Mat DiffusionSchedule::posterior_mean(const nn::Mat& x0, const nn::Mat& xt, int t) const {
  const double ab = alpha_bar(t), ab_prev = alpha_bar(t - 1), b = beta(t);
  const double c0 = std::sqrt(ab_prev) * b / (1.0 - ab);
  const double ct = std::sqrt(1.0 - b) * (1.0 - ab_prev) / (1.0 - ab);
  return c0 * x0 + ct * xt;
}

}  // namespace touchadd::editor
