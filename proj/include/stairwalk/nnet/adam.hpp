#pragma once

#include <vector>

#include "stairwalk/nnet/autodiff.hpp"

namespace stairwalk::nnet {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  /// One update of every parameter from its accumulated gradient. The
  /// parameter list must be the same (same order, same shapes) on each call.
  void step(const std::vector<Parameter*>& params);

  [[nodiscard]] const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  [[nodiscard]] long steps() const { return t_; }

  // Moment buffers, exposed for checkpointing.
  [[nodiscard]] std::vector<Mat>& first_moments() { return m_; }
  [[nodiscard]] std::vector<Mat>& second_moments() { return v_; }
  [[nodiscard]] const std::vector<Mat>& first_moments() const { return m_; }
  [[nodiscard]] const std::vector<Mat>& second_moments() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  AdamConfig config_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long t_ = 0;
};

}  // namespace stairwalk::nnet
