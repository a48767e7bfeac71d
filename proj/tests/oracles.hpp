#pragma once

// Reference implementations used only by the tests. They deliberately avoid
// the library's own helpers so that agreement means something.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// Best & Fisher (1979) rejection sampler for the Von Mises distribution on
// (-pi, pi] with mean 0 and concentration kappa.
class VonMisesSampler {
 public:
  explicit VonMisesSampler(double kappa) : kappa_(kappa) {
    const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
    r_ = (1.0 + rho * rho) / (2.0 * rho);
  }

  template <class Gen>
  double operator()(Gen& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (true) {
      const double z = std::cos(std::numbers::pi * u(gen));
      const double f = (1.0 + r_ * z) / (r_ + z);
      const double c = kappa_ * (r_ - f);
      const double u2 = u(gen);
      if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
        const double theta = std::acos(std::clamp(f, -1.0, 1.0));
        return u(gen) < 0.5 ? -theta : theta;
      }
    }
  }

 private:
  double kappa_;
  double r_ = 1.0;
};

// Offset of phase from the interval midpoint, wrapped into [-0.5, 0.5).
inline double wrapped_offset(double phase, double start, double end) {
  const double mid = 0.5 * (start + end);
  double u = phase - mid;
  u -= std::floor(u + 0.5);
  return u;
}

inline double hard_indicator(double phase, double start, double end) {
  const double half = 0.5 * (end - start);
  const double u = wrapped_offset(phase, start, end);
  return (u >= -half && u < half) ? 1.0 : 0.0;
}

// Textbook GAE as a double loop: A_t = sum_l (g l)^l delta_{t+l}.
inline std::vector<double> gae_double_loop(const std::vector<double>& r, const std::vector<double>& v, double bootstrap,
                                           double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n), adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) delta[t] = r[t] + gamma * (t + 1 < n ? v[t + 1] : bootstrap) - v[t];
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      adv[t] += w * delta[l];
      w *= gamma * lambda;
    }
  }
  return adv;
}

}  // namespace oracle
