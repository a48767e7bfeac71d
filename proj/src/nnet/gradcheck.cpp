#include "stairwalk/nnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stairwalk/nnet/gaussian.hpp"

namespace stairwalk::nnet {

namespace {

struct Problem {
  std::vector<Mat> xs;       // per step, 1 x input
  std::vector<Mat> actions;  // per step, 1 x output
  std::vector<Mat> weights;  // per step, 1 x output
};

double plain_loss(const GaussianPolicy& pol, const Problem& pr) {
  RecurrentState st = pol.net().initial_state(1);
  const Eigen::VectorXd ls = pol.log_std_vector();
  double loss = 0.0;
  for (std::size_t t = 0; t < pr.xs.size(); ++t) {
    const Mat y = pol.net().forward(pr.xs[t], st);
    loss += y.cwiseProduct(pr.weights[t]).sum();
    loss += log_prob(y.row(0).transpose(), ls, pr.actions[t].row(0).transpose());
  }
  return loss;
}

void tape_grad(GaussianPolicy& pol, const Problem& pr) {
  pol.zero_grad();
  Tape tape;
  const auto bound = pol.net().bind(tape);
  const Var ls = tape.param(pol.log_std());
  VarState st = pol.net().initial_state(tape, 1);
  Var loss;
  for (std::size_t t = 0; t < pr.xs.size(); ++t) {
    const Var y = pol.net().forward(bound, tape.constant(pr.xs[t]), st);
    const Var term = sum(y * tape.constant(pr.weights[t])) + sum(log_prob(y, ls, pr.actions[t]));
    loss = loss.valid() ? loss + term : term;
  }
  tape.backward(loss);
}

}  // namespace

GradcheckReport gradcheck(const NetSpec& spec, std::uint64_t seed, const GradcheckOptions& opt) {
  GaussianPolicy pol(spec, derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));
  // Perturb every tensor so biases and log_std are not at their special initial values.
  for (Parameter* p : pol.parameters())
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] += 0.1 * standard_normal(rng);

  GradcheckReport rep;
  for (int n = 0; n < opt.inputs; ++n) {
    Problem pr;
    for (int t = 0; t < opt.sequence_length; ++t) {
      Mat x(1, spec.input), a(1, spec.output), w(1, spec.output);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = standard_normal(rng);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = standard_normal(rng);
      pr.xs.push_back(x);
      pr.actions.push_back(a);
      pr.weights.push_back(w);
    }
    tape_grad(pol, pr);
    for (Parameter* p : pol.parameters()) {
      const Eigen::Index size = p->value.size();
      const int picks = static_cast<int>(std::min<Eigen::Index>(opt.coords_per_tensor, size));
      for (int k = 0; k < picks; ++k) {
        const Eigen::Index idx = uniform_int(rng, 0, static_cast<int>(size - 1));
        double& v = p->value.data()[idx];
        const double saved = v;
        const double h = opt.step;
        auto at = [&](double d) {
          v = saved + d;
          const double r = plain_loss(pol, pr);
          v = saved;
          return r;
        };
        // Fourth-order central stencil: its truncation error is small enough
        // to allow a step where rounding in the loss no longer dominates
        // coordinates with gradients near 1e-7.
        const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        const double analytic = p->grad.data()[idx];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++rep.checked;
        if (rel > rep.max_rel_error || !std::isfinite(rel)) {
          rep.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
          char buf[96];
          std::snprintf(buf, sizeof buf, "] analytic %.6e numeric %.6e", analytic, numeric);
          rep.worst = p->name + "[" + std::to_string(idx) + buf;
        }
      }
    }
  }
  return rep;
}

}  // namespace stairwalk::nnet
