#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lhgnn/errors.hpp"
#include "lhgnn/tensor.hpp"

namespace lhgnn {

enum class OptimizerKind { kAdam, kSgd };

inline OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer: " + name + " (expected adam or sgd)");
}

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) or plain gradient descent over a
// fixed parameter list. Gradients must be populated before step().
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerKind kind, double lr)
      : params_(std::move(params)), kind_(kind), lr_(lr) {
    if (lr <= 0.0) throw ConfigError("optimizer: learning rate must be positive");
    if (kind_ == OptimizerKind::kAdam) {
      m_.resize(params_.size());
      v_.resize(params_.size());
      for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].size(), 0.0);
        v_[i].assign(params_[i].size(), 0.0);
      }
    }
  }

  void step() {
    ++t_;
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      const double* g = p.grad();
      for (int64_t j = 0; j < p.size(); ++j)
        if (!std::isfinite(g[j]))
          throw NumericError("optimizer: non-finite gradient in parameter " + std::to_string(i) +
                             " at coordinate " + std::to_string(j));
      double* x = p.data();
      if (kind_ == OptimizerKind::kSgd) {
        for (int64_t j = 0; j < p.size(); ++j) x[j] -= lr_ * g[j];
        continue;
      }
      const double bc1 = 1.0 - std::pow(kBeta1, t_);
      const double bc2 = 1.0 - std::pow(kBeta2, t_);
      double* m = m_[i].data();
      double* v = v_[i].data();
      for (int64_t j = 0; j < p.size(); ++j) {
        m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g[j];
        v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g[j] * g[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        x[j] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  int64_t steps() const { return t_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  std::vector<Tensor> params_;
  OptimizerKind kind_;
  double lr_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace lhgnn
