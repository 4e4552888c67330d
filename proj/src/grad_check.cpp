#include "w2s/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "w2s/errors.hpp"

namespace w2s {

GradCheckResult grad_check_detailed(const ScalarFn& fn, std::span<Tensor<double>> inputs,
                                    double eps) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape<double> tape;
  const Tensor<double> loss = fn(tape);
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  auto evaluate = [&]() {
    Tape<double> scratch;
    return fn(scratch).item();
  };

  GradCheckResult result;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto data = inputs[ti].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = evaluate();
      data[i] = saved - eps;
      const double down = evaluate();
      data[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite function value");
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[ti][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_rel_error) {
        result = {rel, ti, i, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace w2s
