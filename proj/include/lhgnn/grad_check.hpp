#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lhgnn/tensor.hpp"

namespace lhgnn {

// Compares reverse-mode gradients against central finite differences,
// coordinate by coordinate, and returns the worst relative error. The
// callable must be deterministic and evaluate the loss from the current
// parameter values; it receives a tape only for the analytic pass.
inline double grad_check(const std::function<Tensor(Tape*)>& f, std::vector<Tensor> params,
                         double eps = 1e-5) {
  if (eps < 1e-7 || eps > 1e-3) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");

  Tape tape;
  Tensor loss = f(&tape);
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad_vec());

  double worst = 0.0;
  for (size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    for (int64_t i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + eps;
      const double up = f(nullptr).value();
      p.data()[i] = saved - eps;
      const double down = f(nullptr).value();
      p.data()[i] = saved;

      const double fd = (up - down) / (2.0 * eps);
      const double ad = analytic[t][i];
      if (!std::isfinite(fd) || !std::isfinite(ad))
        throw NumericError("grad_check: non-finite gradient at parameter " + std::to_string(t) +
                           " coordinate " + std::to_string(i) + " (fd=" + std::to_string(fd) +
                           ", ad=" + std::to_string(ad) + ")");
      const double rel =
          std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace lhgnn
