#pragma once

#include <cstdint>
#include <string>

#include "stairwalk/nnet/net.hpp"

namespace stairwalk::nnet {

struct GradcheckOptions {
  int inputs = 10;          // random input sequences
  int sequence_length = 3;  // steps per sequence, exercises recurrence
  int coords_per_tensor = 12;
  double step = 3e-3;  // fourth-order stencil step
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // parameter name and index of the worst coordinate
  int checked = 0;
};

/// Compares tape gradients of a Gaussian policy's log-likelihood-plus-linear
/// loss against central finite differences on randomly chosen coordinates.
[[nodiscard]] GradcheckReport gradcheck(const NetSpec& spec, std::uint64_t seed, const GradcheckOptions& opt = {});

}  // namespace stairwalk::nnet
