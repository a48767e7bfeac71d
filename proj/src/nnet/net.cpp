#include "stairwalk/nnet/net.hpp"

#include <cmath>

namespace stairwalk::nnet {

namespace {

Mat normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = std * standard_normal(rng);
  return m;
}

// Random orthogonal matrix from the QR factorization of a Gaussian matrix,
// with column signs fixed so the result is unique for a given draw.
Mat orthogonal(Rng& rng, Eigen::Index n) {
  const Mat a = normal(rng, n, n, 1.0);
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string to_string(Arch a) { return a == Arch::lstm ? "lstm" : "feedforward"; }

Arch arch_from_string(const std::string& s) {
  if (s == "lstm") return Arch::lstm;
  if (s == "feedforward" || s == "ff") return Arch::feedforward;
  throw ConfigError("unknown network architecture '" + s + "'");
}

void NetSpec::validate() const {
  if (input <= 0 || output <= 0 || hidden <= 0 || layers <= 0) throw ConfigError("network dimensions must be > 0");
  if (!(head_gain >= 0.0)) throw ConfigError("network head_gain must be >= 0");
}

Net::Net(NetSpec spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  const Eigen::Index h = spec_.hidden;
  Eigen::Index in = spec_.input;
  for (int l = 0; l < spec_.layers; ++l) {
    const std::string p = (recurrent() ? "lstm" : "fc") + std::to_string(l);
    if (recurrent()) {
      Mat w_hh(h, 4 * h);
      for (int g = 0; g < 4; ++g) w_hh.middleCols(g * h, h) = orthogonal(rng, h);
      Mat bias = Mat::Zero(1, 4 * h);
      bias.middleCols(h, h).setOnes();  // forget gate
      params_.push_back({p + ".w_ih", normal(rng, in, 4 * h, 1.0 / std::sqrt(static_cast<double>(in))), {}});
      params_.push_back({p + ".w_hh", std::move(w_hh), {}});
      params_.push_back({p + ".bias", std::move(bias), {}});
    } else {
      params_.push_back({p + ".w", normal(rng, in, h, 1.0 / std::sqrt(static_cast<double>(in))), {}});
      params_.push_back({p + ".b", Mat::Zero(1, h), {}});
    }
    in = h;
  }
  params_.push_back({"head.w", normal(rng, h, spec_.output, spec_.head_gain / std::sqrt(static_cast<double>(h))), {}});
  params_.push_back({"head.b", Mat::Zero(1, spec_.output), {}});
  zero_grad();
}

std::size_t Net::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void Net::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

RecurrentState Net::initial_state(Eigen::Index batch) const {
  RecurrentState s;
  if (!recurrent()) return s;
  for (int l = 0; l < spec_.layers; ++l) {
    s.h.push_back(Mat::Zero(batch, spec_.hidden));
    s.c.push_back(Mat::Zero(batch, spec_.hidden));
  }
  return s;
}

Mat Net::forward(const Mat& x, RecurrentState& state) const {
  if (x.cols() != spec_.input)
    throw ShapeError("network expects " + std::to_string(spec_.input) + " inputs, got " + std::to_string(x.cols()));
  const Eigen::Index h = spec_.hidden;
  Mat act = x;
  if (recurrent()) {
    if (state.h.size() != static_cast<std::size_t>(spec_.layers)) state = initial_state(x.rows());
    for (std::size_t l = 0; l < static_cast<std::size_t>(spec_.layers); ++l) {
      if (state.h[l].rows() != x.rows()) throw ShapeError("recurrent state batch does not match input batch");
      const Mat& w_ih = params_[3 * l].value;
      const Mat& w_hh = params_[3 * l + 1].value;
      const Mat& b = params_[3 * l + 2].value;
      Mat z = act * w_ih + state.h[l] * w_hh;
      z.rowwise() += b.row(0);
      const Mat i = z.middleCols(0, h).unaryExpr([](double v) { return logistic(v); });
      const Mat f = z.middleCols(h, h).unaryExpr([](double v) { return logistic(v); });
      const Mat g = z.middleCols(2 * h, h).array().tanh().matrix();
      const Mat o = z.middleCols(3 * h, h).unaryExpr([](double v) { return logistic(v); });
      state.c[l] = f.cwiseProduct(state.c[l]) + i.cwiseProduct(g);
      state.h[l] = o.cwiseProduct(state.c[l].array().tanh().matrix());
      act = state.h[l];
    }
  } else {
    for (std::size_t l = 0; l < static_cast<std::size_t>(spec_.layers); ++l) {
      Mat z = act * params_[2 * l].value;
      z.rowwise() += params_[2 * l + 1].value.row(0);
      act = z.array().tanh().matrix();
    }
  }
  const std::size_t head = params_.size() - 2;
  Mat y = act * params_[head].value;
  y.rowwise() += params_[head + 1].value.row(0);
  return y;
}

std::vector<Var> Net::bind(Tape& tape) {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(tape.param(p));
  return out;
}

VarState Net::initial_state(Tape& tape, Eigen::Index batch) const {
  VarState s;
  if (!recurrent()) return s;
  for (int l = 0; l < spec_.layers; ++l) {
    s.h.push_back(tape.constant(Mat::Zero(batch, spec_.hidden)));
    s.c.push_back(tape.constant(Mat::Zero(batch, spec_.hidden)));
  }
  return s;
}

Var Net::forward(const std::vector<Var>& bound, const Var& x, VarState& state) const {
  if (bound.size() != params_.size()) throw ShapeError("network: bound parameter list has the wrong length");
  if (x.cols() != spec_.input)
    throw ShapeError("network expects " + std::to_string(spec_.input) + " inputs, got " + std::to_string(x.cols()));
  Var act = x;
  if (recurrent()) {
    if (state.h.size() != static_cast<std::size_t>(spec_.layers)) state = initial_state(*x.tape(), x.rows());
    for (std::size_t l = 0; l < static_cast<std::size_t>(spec_.layers); ++l) {
      const Var z = affine(act, bound[3 * l], bound[3 * l + 2]) + matmul(state.h[l], bound[3 * l + 1]);
      const Var gates = lstm_gates(z);
      state.c[l] = lstm_cell(gates, state.c[l]);
      state.h[l] = lstm_hidden(gates, state.c[l]);
      act = state.h[l];
    }
  } else {
    for (std::size_t l = 0; l < static_cast<std::size_t>(spec_.layers); ++l)
      act = tanh(affine(act, bound[2 * l], bound[2 * l + 1]));
  }
  const std::size_t head = params_.size() - 2;
  return affine(act, bound[head], bound[head + 1]);
}

}  // namespace stairwalk::nnet
