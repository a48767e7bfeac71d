#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stairwalk/nnet/autodiff.hpp"

namespace stairwalk::nnet {

enum class Arch { lstm, feedforward };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

struct NetSpec {
  Arch arch = Arch::lstm;
  int input = 24;
  int output = 7;
  int hidden = 128;
  int layers = 2;
  /// Output-layer weights are drawn with std head_gain / sqrt(hidden).
  double head_gain = 1.0;

  void validate() const;
  [[nodiscard]] static NetSpec recurrent(int input, int output) { return {Arch::lstm, input, output, 128, 2, 1.0}; }
  [[nodiscard]] static NetSpec feedforward(int input, int output) {
    return {Arch::feedforward, input, output, 300, 2, 1.0};
  }
};

/// Per-layer recurrent state, one batch entry per row. Empty for feedforward nets.
struct RecurrentState {
  std::vector<Mat> h;
  std::vector<Mat> c;
};

struct VarState {
  std::vector<Var> h;
  std::vector<Var> c;
};

/// Stacked LSTM (or tanh MLP) followed by a linear head.
class Net {
 public:
  Net() = default;
  Net(NetSpec spec, std::uint64_t seed);

  [[nodiscard]] const NetSpec& spec() const { return spec_; }
  [[nodiscard]] std::vector<Parameter>& params() { return params_; }
  [[nodiscard]] const std::vector<Parameter>& params() const { return params_; }
  [[nodiscard]] std::size_t param_count() const;
  [[nodiscard]] bool recurrent() const { return spec_.arch == Arch::lstm; }

  [[nodiscard]] RecurrentState initial_state(Eigen::Index batch) const;
  /// Plain-Eigen inference. Advances `state` in place.
  [[nodiscard]] Mat forward(const Mat& x, RecurrentState& state) const;

  /// Binds every parameter as a tape leaf, in params() order.
  [[nodiscard]] std::vector<Var> bind(Tape& tape);
  [[nodiscard]] VarState initial_state(Tape& tape, Eigen::Index batch) const;
  /// Differentiable forward. `state` is replaced by the next state.
  [[nodiscard]] Var forward(const std::vector<Var>& bound, const Var& x, VarState& state) const;

  void zero_grad();

 private:
  NetSpec spec_;
  std::vector<Parameter> params_;
};

}  // namespace stairwalk::nnet
