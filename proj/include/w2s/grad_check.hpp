#pragma once

#include <functional>
#include <span>

#include "w2s/tensor.hpp"

namespace w2s {

// A scalar-valued function of the tensors it closes over, recorded on `tape`.
using ScalarFn = std::function<Tensor<double>(Tape<double>& tape)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Coordinate-wise relative error denominator floor. Below it the comparison is
// effectively absolute, so vanishing gradients do not inflate the ratio.
inline constexpr double kGradCheckFloor = 1e-4;

/**
 * Compares tape gradients of `fn` w.r.t. `inputs` against central differences
 * (f(x+eps) - f(x-eps)) / (2 eps).
 *
 * Relative error per coordinate is |a - n| / max(|a|, |n|, kGradCheckFloor).
 * Input gradients are overwritten.
 */
GradCheckResult grad_check_detailed(const ScalarFn& fn, std::span<Tensor<double>> inputs,
                                    double eps = 1e-5);

inline double grad_check(const ScalarFn& fn, std::span<Tensor<double>> inputs, double eps = 1e-5) {
  return grad_check_detailed(fn, inputs, eps).max_rel_error;
}

}  // namespace w2s
