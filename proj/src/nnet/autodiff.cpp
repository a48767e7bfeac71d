#include "stairwalk/nnet/autodiff.hpp"

#include <cmath>

namespace stairwalk::nnet {

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw ShapeError("autodiff: operation on an unbound variable");
  if (a.tape() != b.tape()) throw ShapeError("autodiff: operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ShapeError("autodiff: operation on an unbound variable");
  return *a.tape();
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string("autodiff: ") + op + " shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                     ")");
}

void row_vector(const Var& a, const Var& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError(std::string("autodiff: ") + op + " needs a 1x" + std::to_string(a.cols()) + " row");
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const Mat& Var::value() const {
  if (!valid()) throw ShapeError("autodiff: unbound variable");
  return tape_->value(id_);
}

Var Tape::constant(Mat value) { return push(Op::leaf, std::move(value)); }

Var Tape::param(Parameter& p) {
  Var v = push(Op::leaf, p.value);
  Node& n = nodes_.back();
  n.param = &p;
  n.needs_grad = true;
  return v;
}

Var Tape::push(Op op, Mat value, int a, int b, int c, double s0, double s1) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.a = a;
  n.b = b;
  n.c = c;
  n.s0 = s0;
  n.s1 = s1;
  n.needs_grad = tracks(a) || tracks(b) || tracks(c);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Mat& g) {
  if (!tracks(id)) return;
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& loss) {
  if (!loss.valid() || loss.tape() != this) throw ShapeError("autodiff: loss does not belong to this tape");
  const Mat& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("autodiff: backward needs a scalar loss");
  if (!tracks(loss.id())) throw Error("autodiff: loss does not depend on any parameter");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  deferred_.clear();
  nodes_[static_cast<std::size_t>(loss.id())].grad = Mat::Ones(1, 1);
  for (int i = loss.id(); i >= 0; --i) {
    flush_deferred(i);
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    propagate(i);
  }
}

bool Tape::is_param(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.op == Op::leaf && n.param != nullptr;
}

// A weight reused at every timestep of a sequence would otherwise receive one
// thin outer product per step. Collecting the (input, output gradient) pairs and
// multiplying the stacked blocks once is much cheaper. Every consumer of a leaf
// sits later on the tape, so all pairs are known when the sweep reaches it.
void Tape::flush_deferred(int id) {
  auto it = deferred_.find(id);
  if (it == deferred_.end()) return;
  const auto& pairs = it->second;
  Eigen::Index rows = 0;
  for (const auto& [in, out] : pairs) rows += value(in).rows();
  const Eigen::Index cols_in = value(pairs.front().first).cols();
  const Eigen::Index cols_out = grad(pairs.front().second).cols();
  Mat x(rows, cols_in), g(rows, cols_out);
  Eigen::Index r = 0;
  for (const auto& [in, out] : pairs) {
    const Eigen::Index k = value(in).rows();
    x.middleRows(r, k) = value(in);
    g.middleRows(r, k) = grad(out);
    r += k;
  }
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.grad.noalias() += x.transpose() * g;
  deferred_.erase(it);
}

void Tape::propagate(int index) {
  Node& n = nodes_[static_cast<std::size_t>(index)];
  const Mat& g = n.grad;
  auto val = [&](int id) -> const Mat& { return nodes_[static_cast<std::size_t>(id)].value; };
  switch (n.op) {
    case Op::leaf:
      if (n.param != nullptr) {
        if (n.param->grad.rows() != g.rows() || n.param->grad.cols() != g.cols()) n.param->zero_grad();
        n.param->grad += g;
      }
      break;
    case Op::matmul:
    case Op::affine:
      if (tracks(n.a)) accumulate(n.a, g * val(n.b).transpose());
      if (tracks(n.b)) {
        if (is_param(n.b)) {
          deferred_[n.b].emplace_back(n.a, index);
        } else {
          accumulate(n.b, val(n.a).transpose() * g);
        }
      }
      if (n.op == Op::affine && tracks(n.c)) accumulate(n.c, g.colwise().sum());
      break;
    case Op::add:
      accumulate(n.a, g);
      accumulate(n.b, g);
      break;
    case Op::sub:
      accumulate(n.a, g);
      if (tracks(n.b)) accumulate(n.b, -g);
      break;
    case Op::mul:
      if (tracks(n.a)) accumulate(n.a, g.cwiseProduct(val(n.b)));
      if (tracks(n.b)) accumulate(n.b, g.cwiseProduct(val(n.a)));
      break;
    case Op::add_row:
      accumulate(n.a, g);
      if (tracks(n.b)) accumulate(n.b, g.colwise().sum());
      break;
    case Op::mul_row: {
      const Mat& r = val(n.b);
      if (tracks(n.a)) accumulate(n.a, g.array().rowwise() * r.row(0).array());
      if (tracks(n.b)) accumulate(n.b, g.cwiseProduct(val(n.a)).colwise().sum());
      break;
    }
    case Op::scale:
      accumulate(n.a, g * n.s0);
      break;
    case Op::add_scalar:
      accumulate(n.a, g);
      break;
    case Op::tanh:
      accumulate(n.a, g.array() * (1.0 - n.value.array().square()));
      break;
    case Op::sigmoid:
      accumulate(n.a, g.array() * n.value.array() * (1.0 - n.value.array()));
      break;
    case Op::exp:
      accumulate(n.a, g.cwiseProduct(n.value));
      break;
    case Op::square:
      accumulate(n.a, 2.0 * g.cwiseProduct(val(n.a)));
      break;
    case Op::slice_cols: {
      const Mat& a = val(n.a);
      Mat full = Mat::Zero(a.rows(), a.cols());
      full.middleCols(static_cast<Eigen::Index>(n.s0), g.cols()) = g;
      accumulate(n.a, full);
      break;
    }
    case Op::top_rows: {
      const Mat& a = val(n.a);
      Mat full = Mat::Zero(a.rows(), a.cols());
      full.topRows(g.rows()) = g;
      accumulate(n.a, full);
      break;
    }
    case Op::sum: {
      const Mat& a = val(n.a);
      accumulate(n.a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
      break;
    }
    case Op::row_sum:
      accumulate(n.a, g.replicate(1, val(n.a).cols()));
      break;
    case Op::minimum: {
      const Mat& a = val(n.a);
      const Mat& b = val(n.b);
      const auto pick_a = (a.array() <= b.array()).cast<double>();
      if (tracks(n.a)) accumulate(n.a, g.array() * pick_a);
      if (tracks(n.b)) accumulate(n.b, g.array() * (1.0 - pick_a));
      break;
    }
    case Op::clamp: {
      const Mat& a = val(n.a);
      const auto inside = ((a.array() > n.s0) && (a.array() < n.s1)).cast<double>();
      accumulate(n.a, g.array() * inside);
      break;
    }
    case Op::lstm_gates: {
      const Eigen::Index h = n.value.cols() / 4;
      const auto& y = n.value;
      Mat d(y.rows(), y.cols());
      for (int blk = 0; blk < 4; ++blk) {
        auto yb = y.middleCols(blk * h, h).array();
        auto gb = g.middleCols(blk * h, h).array();
        if (blk == 2) {
          d.middleCols(blk * h, h) = gb * (1.0 - yb.square());
        } else {
          d.middleCols(blk * h, h) = gb * yb * (1.0 - yb);
        }
      }
      accumulate(n.a, d);
      break;
    }
    case Op::lstm_cell: {
      const Mat& gates = val(n.a);
      const Mat& c_prev = val(n.b);
      const Eigen::Index h = c_prev.cols();
      if (tracks(n.a)) {
        Mat d = Mat::Zero(gates.rows(), gates.cols());
        d.middleCols(0, h) = g.cwiseProduct(gates.middleCols(2 * h, h));
        d.middleCols(h, h) = g.cwiseProduct(c_prev);
        d.middleCols(2 * h, h) = g.cwiseProduct(gates.middleCols(0, h));
        accumulate(n.a, d);
      }
      if (tracks(n.b)) accumulate(n.b, g.cwiseProduct(gates.middleCols(h, h)));
      break;
    }
    case Op::lstm_hidden: {
      const Mat& gates = val(n.a);
      const Mat& c = val(n.b);
      const Eigen::Index h = c.cols();
      const Mat tc = c.array().tanh().matrix();
      if (tracks(n.a)) {
        Mat d = Mat::Zero(gates.rows(), gates.cols());
        d.middleCols(3 * h, h) = g.cwiseProduct(tc);
        accumulate(n.a, d);
      }
      if (tracks(n.b))
        accumulate(n.b, (g.array() * gates.middleCols(3 * h, h).array() * (1.0 - tc.array().square())).matrix());
      break;
    }
  }
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows())
    throw ShapeError("autodiff: matmul inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  return t.push(Op::matmul, a.value() * b.value(), a.id(), b.id());
}

Var operator+(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  same_shape(a, b, "add");
  return t.push(Op::add, a.value() + b.value(), a.id(), b.id());
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  same_shape(a, b, "sub");
  return t.push(Op::sub, a.value() - b.value(), a.id(), b.id());
}

Var operator*(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  same_shape(a, b, "mul");
  return t.push(Op::mul, a.value().cwiseProduct(b.value()), a.id(), b.id());
}

Var operator*(const Var& a, double s) { return tape_of(a).push(Op::scale, a.value() * s, a.id(), -1, -1, s); }
Var operator*(double s, const Var& a) { return a * s; }

Var operator+(const Var& a, double s) {
  return tape_of(a).push(Op::add_scalar, (a.value().array() + s).matrix(), a.id(), -1, -1, s);
}

Var operator-(const Var& a) { return a * -1.0; }

Var add_row(const Var& a, const Var& row) {
  Tape& t = same_tape(a, row);
  row_vector(a, row, "add_row");
  Mat v = a.value();
  v.rowwise() += row.value().row(0);
  return t.push(Op::add_row, std::move(v), a.id(), row.id());
}

Var mul_row(const Var& a, const Var& row) {
  Tape& t = same_tape(a, row);
  row_vector(a, row, "mul_row");
  Mat v = a.value().array().rowwise() * row.value().row(0).array();
  return t.push(Op::mul_row, std::move(v), a.id(), row.id());
}

Var tanh(const Var& a) { return tape_of(a).push(Op::tanh, a.value().array().tanh().matrix(), a.id()); }

Var sigmoid(const Var& a) {
  return tape_of(a).push(Op::sigmoid, a.value().unaryExpr([](double x) { return sigmoid_scalar(x); }), a.id());
}

Var exp(const Var& a) { return tape_of(a).push(Op::exp, a.value().array().exp().matrix(), a.id()); }

Var square(const Var& a) { return tape_of(a).push(Op::square, a.value().array().square().matrix(), a.id()); }

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) throw ShapeError("autodiff: column slice out of range");
  return tape_of(a).push(Op::slice_cols, a.value().middleCols(start, n), a.id(), -1, -1, static_cast<double>(start));
}

Var top_rows(const Var& a, Eigen::Index n) {
  if (n < 0 || n > a.rows()) throw ShapeError("autodiff: top_rows count out of range");
  return tape_of(a).push(Op::top_rows, a.value().topRows(n), a.id());
}

Var sum(const Var& a) { return tape_of(a).push(Op::sum, Mat::Constant(1, 1, a.value().sum()), a.id()); }

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0.0) throw ShapeError("autodiff: mean of an empty tensor");
  return sum(a) * (1.0 / n);
}

Var row_sum(const Var& a) { return tape_of(a).push(Op::row_sum, a.value().rowwise().sum(), a.id()); }

Var minimum(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  same_shape(a, b, "minimum");
  return t.push(Op::minimum, a.value().cwiseMin(b.value()), a.id(), b.id());
}

Var clamp(const Var& a, double lo, double hi) {
  if (!(lo <= hi)) throw ShapeError("autodiff: clamp needs lo <= hi");
  return tape_of(a).push(Op::clamp, a.value().cwiseMax(lo).cwiseMin(hi), a.id(), -1, -1, lo, hi);
}

Var affine(const Var& x, const Var& w, const Var& b) {
  Tape& t = same_tape(x, w);
  same_tape(x, b);
  if (x.cols() != w.rows()) throw ShapeError("autodiff: affine input width does not match weight rows");
  if (b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("autodiff: affine bias must be 1 x out");
  Mat v = x.value() * w.value();
  v.rowwise() += b.value().row(0);
  return t.push(Op::affine, std::move(v), x.id(), w.id(), b.id());
}

Var lstm_gates(const Var& preact) {
  const Mat& z = preact.value();
  if (z.cols() % 4 != 0) throw ShapeError("autodiff: LSTM preactivation width must be a multiple of 4");
  const Eigen::Index h = z.cols() / 4;
  Mat y(z.rows(), z.cols());
  y.middleCols(0, 2 * h) = z.middleCols(0, 2 * h).unaryExpr([](double x) { return sigmoid_scalar(x); });
  y.middleCols(2 * h, h) = z.middleCols(2 * h, h).array().tanh().matrix();
  y.middleCols(3 * h, h) = z.middleCols(3 * h, h).unaryExpr([](double x) { return sigmoid_scalar(x); });
  return tape_of(preact).push(Op::lstm_gates, std::move(y), preact.id());
}

Var lstm_cell(const Var& gates, const Var& c_prev) {
  Tape& t = same_tape(gates, c_prev);
  const Eigen::Index h = c_prev.cols();
  if (gates.cols() != 4 * h || gates.rows() != c_prev.rows()) throw ShapeError("autodiff: LSTM cell shape mismatch");
  const Mat& g = gates.value();
  Mat c = g.middleCols(h, h).cwiseProduct(c_prev.value()) + g.middleCols(0, h).cwiseProduct(g.middleCols(2 * h, h));
  return t.push(Op::lstm_cell, std::move(c), gates.id(), c_prev.id());
}

Var lstm_hidden(const Var& gates, const Var& c_next) {
  Tape& t = same_tape(gates, c_next);
  const Eigen::Index h = c_next.cols();
  if (gates.cols() != 4 * h || gates.rows() != c_next.rows())
    throw ShapeError("autodiff: LSTM hidden shape mismatch");
  Mat v = gates.value().middleCols(3 * h, h).cwiseProduct(c_next.value().array().tanh().matrix());
  return t.push(Op::lstm_hidden, std::move(v), gates.id(), c_next.id());
}

}  // namespace stairwalk::nnet
