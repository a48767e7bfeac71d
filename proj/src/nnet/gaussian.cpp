#include "stairwalk/nnet/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace stairwalk::nnet {

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

GaussianSample sample_action(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, Rng& rng) {
  if (mean.size() != log_std.size()) throw ShapeError("gaussian: mean and log_std sizes differ");
  GaussianSample s;
  s.action.resize(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) s.action[i] = mean[i] + std::exp(log_std[i]) * standard_normal(rng);
  s.log_prob = log_prob(mean, log_std, s.action);
  return s;
}

double log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, const Eigen::VectorXd& action) {
  if (mean.size() != log_std.size() || mean.size() != action.size())
    throw ShapeError("gaussian: mean, log_std, and action sizes differ");
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -0.5 * z * z - log_std[i] - kHalfLog2Pi;
  }
  return lp;
}

double kl_divergence(const Eigen::VectorXd& mean_old, const Eigen::VectorXd& log_std_old,
                     const Eigen::VectorXd& mean_new, const Eigen::VectorXd& log_std_new) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mean_old.size(); ++i) {
    const double var_old = std::exp(2.0 * log_std_old[i]);
    const double var_new = std::exp(2.0 * log_std_new[i]);
    const double d = mean_old[i] - mean_new[i];
    kl += log_std_new[i] - log_std_old[i] + (var_old + d * d) / (2.0 * var_new) - 0.5;
  }
  return kl;
}

Var log_prob(const Var& mean, const Var& log_std, const Mat& actions) {
  if (actions.rows() != mean.rows() || actions.cols() != mean.cols())
    throw ShapeError("gaussian: actions and mean shapes differ");
  Tape& t = *mean.tape();
  const Var diff = t.constant(actions) - mean;
  const Var z = mul_row(diff, exp(-log_std));
  const Var quad = row_sum(square(z)) * -0.5;
  const Var norm = matmul(t.constant(Mat::Ones(mean.rows(), 1)), row_sum(log_std));
  return (quad - norm) + (-kHalfLog2Pi * static_cast<double>(mean.cols()));
}

GaussianPolicy::GaussianPolicy(NetSpec spec, std::uint64_t seed, double initial_std) : net_(spec, seed) {
  if (!(initial_std > 0.0)) throw ConfigError("initial action std must be > 0");
  log_std_.name = "log_std";
  log_std_.value = Mat::Constant(1, spec.output, std::log(initial_std));
  log_std_.zero_grad();
}

std::vector<Parameter*> GaussianPolicy::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : net_.params()) out.push_back(&p);
  out.push_back(&log_std_);
  return out;
}

void GaussianPolicy::zero_grad() {
  net_.zero_grad();
  log_std_.zero_grad();
}

}  // namespace stairwalk::nnet
