#pragma once

#include <cstdint>
#include <vector>

#include "stairwalk/nnet/net.hpp"

namespace stairwalk::nnet {

struct GaussianSample {
  Eigen::VectorXd action;
  double log_prob = 0.0;
};

/// Diagonal Gaussian draw around `mean` with per-dimension log standard deviation.
[[nodiscard]] GaussianSample sample_action(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, Rng& rng);
[[nodiscard]] double log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                              const Eigen::VectorXd& action);
/// KL(old || new) between diagonal Gaussians.
[[nodiscard]] double kl_divergence(const Eigen::VectorXd& mean_old, const Eigen::VectorXd& log_std_old,
                                   const Eigen::VectorXd& mean_new, const Eigen::VectorXd& log_std_new);

/// Row-wise log density of `actions` (B x A) under N(mean, exp(log_std)^2).
[[nodiscard]] Var log_prob(const Var& mean, const Var& log_std, const Mat& actions);

/// Mean network plus a state-independent log standard deviation vector.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(NetSpec spec, std::uint64_t seed, double initial_std = 0.3);

  [[nodiscard]] Net& net() { return net_; }
  [[nodiscard]] const Net& net() const { return net_; }
  [[nodiscard]] Parameter& log_std() { return log_std_; }
  [[nodiscard]] const Parameter& log_std() const { return log_std_; }
  [[nodiscard]] Eigen::VectorXd log_std_vector() const { return log_std_.value.row(0).transpose(); }
  [[nodiscard]] std::size_t param_count() const { return net_.param_count() + log_std_.value.size(); }

  /// Every trainable tensor: network parameters followed by log_std.
  [[nodiscard]] std::vector<Parameter*> parameters();
  void zero_grad();

 private:
  Net net_;
  Parameter log_std_;
};

}  // namespace stairwalk::nnet
