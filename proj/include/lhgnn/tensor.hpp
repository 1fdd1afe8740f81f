#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lhgnn/errors.hpp"

namespace lhgnn {

// Dense 64-bit tensor, rank 2 (a scalar is 1x1, a vector 1xn). Values and
// gradient share one buffer layout (row-major). Tensor is a cheap handle;
// copies alias the same storage, which is what the tape needs.
struct TensorImpl {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> v;
  std::vector<double> g;
  bool requires_grad = false;

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() : impl_(std::make_shared<TensorImpl>()) {}

  Tensor(int64_t rows, int64_t cols, bool requires_grad = false)
      : impl_(std::make_shared<TensorImpl>()) {
    impl_->rows = rows;
    impl_->cols = cols;
    impl_->v.assign(static_cast<size_t>(rows * cols), 0.0);
    impl_->requires_grad = requires_grad;
  }

  static Tensor scalar(double x, bool requires_grad = false) {
    Tensor t(1, 1, requires_grad);
    t.impl_->v[0] = x;
    return t;
  }

  static Tensor from_rows(int64_t rows, int64_t cols, std::vector<double> values,
                          bool requires_grad = false) {
    if (static_cast<int64_t>(values.size()) != rows * cols)
      throw DimensionError("from_rows: buffer length " + std::to_string(values.size()) +
                           " does not match shape " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    Tensor t;
    t.impl_->rows = rows;
    t.impl_->cols = cols;
    t.impl_->v = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  int64_t rows() const { return impl_->rows; }
  int64_t cols() const { return impl_->cols; }
  int64_t size() const { return impl_->rows * impl_->cols; }
  bool is_scalar() const { return impl_->rows == 1 && impl_->cols == 1; }

  double* data() { return impl_->v.data(); }
  const double* data() const { return impl_->v.data(); }
  double& at(int64_t i, int64_t j) { return impl_->v[static_cast<size_t>(i * impl_->cols + j)]; }
  double at(int64_t i, int64_t j) const { return impl_->v[static_cast<size_t>(i * impl_->cols + j)]; }
  double value() const {
    if (!is_scalar()) throw ContractError("value(): tensor is not scalar");
    return impl_->v[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  // Gradient buffer; allocated (zero) on first touch.
  double* grad() {
    impl_->ensure_grad();
    return impl_->g.data();
  }
  const std::vector<double>& grad_vec() {
    impl_->ensure_grad();
    return impl_->g;
  }
  bool has_grad() const { return !impl_->g.empty(); }
  void zero_grad() {
    if (!impl_->g.empty()) std::fill(impl_->g.begin(), impl_->g.end(), 0.0);
  }
  void drop_grad() { impl_->g.clear(); }

  bool all_finite() const {
    for (double x : impl_->v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(impl_->rows) + "x" + std::to_string(impl_->cols);
  }

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape. Ops append a closure computing their local adjoint;
// backward() replays them in reverse. Each forward builds a fresh tape, and
// a tape can only be walked once.
class Tape {
 public:
  void record(std::function<void()> back_fn) { nodes_.push_back(std::move(back_fn)); }

  void backward(Tensor loss) {
    if (used_) throw ContractError("backward: tape already consumed; rebuild the forward pass");
    if (!loss.is_scalar()) throw ContractError("backward: loss must be scalar, got " + loss.shape_str());
    used_ = true;
    loss.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return used_; }

 private:
  std::vector<std::function<void()>> nodes_;
  bool used_ = false;
};

}  // namespace lhgnn
