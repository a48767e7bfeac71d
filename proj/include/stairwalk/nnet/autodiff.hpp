#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stairwalk/common.hpp"

namespace stairwalk::nnet {

using Mat = Eigen::MatrixXd;

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Batches are stored one sample per row.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Mat& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op {
  leaf,
  matmul,
  add,
  sub,
  mul,
  add_row,
  mul_row,
  scale,
  add_scalar,
  tanh,
  sigmoid,
  exp,
  square,
  slice_cols,
  top_rows,
  sum,
  row_sum,
  minimum,
  clamp,
  affine,
  lstm_gates,
  lstm_cell,
  lstm_hidden,
};

/// Append-only record of a computation. Nodes only reference earlier nodes,
/// so the graph is acyclic by construction and backward is a reverse sweep.
class Tape {
 public:
  Var constant(Mat value);
  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Var param(Parameter& p);

  /// Reverse sweep from a 1x1 loss. Throws if the loss is not scalar, lives
  /// on another tape, or does not depend on any parameter.
  void backward(const Var& loss);

  [[nodiscard]] const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Gradient of the last backward loss with respect to a node.
  [[nodiscard]] const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Used by the op constructors.
  Var push(Op op, Mat value, int a = -1, int b = -1, int c = -1, double s0 = 0.0, double s1 = 0.0);
  [[nodiscard]] bool tracks(int id) const { return id >= 0 && nodes_[static_cast<std::size_t>(id)].needs_grad; }

 private:
  struct Node {
    Op op = Op::leaf;
    Mat value;
    Mat grad;
    int a = -1, b = -1, c = -1;
    double s0 = 0.0, s1 = 0.0;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  void accumulate(int id, const Mat& g);
  void propagate(int index);
  [[nodiscard]] bool is_param(int id) const;
  void flush_deferred(int id);

  std::vector<Node> nodes_;
  // Parameter leaf -> (input node, product node) pairs awaiting one stacked product.
  std::unordered_map<int, std::vector<std::pair<int, int>>> deferred_;
};

Var matmul(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);  // elementwise
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator+(const Var& a, double s);
Var operator-(const Var& a);
Var add_row(const Var& a, const Var& row);  // broadcast a 1xN row over every row of a
Var mul_row(const Var& a, const Var& row);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n);
/// First n rows; used to drop finished sequences from a sorted batch.
Var top_rows(const Var& a, Eigen::Index n);
Var sum(const Var& a);      // 1x1
Var mean(const Var& a);     // 1x1
Var row_sum(const Var& a);  // Bx1
Var minimum(const Var& a, const Var& b);
/// Clamps elementwise; gradient passes only where lo < a < hi.
Var clamp(const Var& a, double lo, double hi);
/// x W + b with b broadcast over rows.
Var affine(const Var& x, const Var& w, const Var& b);

// Fused LSTM pieces. Gate layout along columns is [input, forget, cell, output].
Var lstm_gates(const Var& preact);                     // sigmoid/sigmoid/tanh/sigmoid
Var lstm_cell(const Var& gates, const Var& c_prev);    // f*c + i*g
Var lstm_hidden(const Var& gates, const Var& c_next);  // o * tanh(c)

}  // namespace stairwalk::nnet
