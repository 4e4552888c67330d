#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace w2s {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/**
 * Dense row-major array with an optional gradient accumulator.
 *
 * Tensor is a shared handle: copies alias the same storage, which is what lets
 * the tape write gradients back into parameters. Use clone() for a deep copy.
 */
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<Real> data();
  std::span<const Real> data() const;
  Real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  // Gradient buffer; empty span until something accumulated into it or
  // zero_grad() was called.
  bool has_grad() const;
  std::span<Real> grad();
  std::span<const Real> grad() const;
  void zero_grad();
  void clear_grad();
  // Allocates a zero gradient if none exists and returns it. Const because
  // gradients belong to the shared storage, not the handle.
  std::span<Real> ensure_grad() const;

  Tensor clone() const;
  Tensor detach() const;
  bool same_storage(const Tensor& other) const noexcept {
    return impl_ == other.impl_;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/**
 * Ordered record of differentiable operations.
 *
 * Nodes are appended as operations execute, so the record is topologically
 * sorted by construction. backward() replays it in reverse, visiting each node
 * once.
 */
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor<Real>> inputs, Tensor<Real> output,
              BackwardFn backward);
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  void clear() noexcept { nodes_.clear(); }

  // Inputs of node i, used by tests to check ordering.
  const std::vector<Tensor<Real>>& inputs(std::size_t i) const {
    return nodes_.at(i).inputs;
  }
  const Tensor<Real>& output(std::size_t i) const { return nodes_.at(i).output; }

  void backward(const Tensor<Real>& loss);

 private:
  struct Node {
    std::vector<Tensor<Real>> inputs;
    Tensor<Real> output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Accumulates dLoss/dT into every requires_grad tensor reachable from `loss`.
template <typename Real>
void backward(const Tensor<Real>& loss, Tape<Real>& tape) {
  tape.backward(loss);
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace w2s
