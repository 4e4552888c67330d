#include "w2s/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "w2s/errors.hpp"

namespace w2s {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (data.size() != numel(shape)) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::filled(Shape shape, Real value, bool requires_grad) {
  std::vector<Real> data(numel(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return Tensor(Shape{1}, {value}, requires_grad);
}

template <typename Real>
const Shape& Tensor<Real>::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

template <typename Real>
std::size_t Tensor<Real>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

template <typename Real>
std::size_t Tensor<Real>::size() const {
  return impl_ ? impl_->data.size() : 0;
}

template <typename Real>
std::span<Real> Tensor<Real>::data() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

template <typename Real>
std::span<const Real> Tensor<Real>::data() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (size() != 1) {
    throw ContractError("item() requires a single-element tensor, got shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

template <typename Real>
bool Tensor<Real>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename Real>
void Tensor<Real>::set_requires_grad(bool on) {
  if (!impl_) throw ContractError("use of undefined tensor");
  impl_->requires_grad = on;
}

template <typename Real>
bool Tensor<Real>::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

template <typename Real>
std::span<Real> Tensor<Real>::grad() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->grad;
}

template <typename Real>
std::span<const Real> Tensor<Real>::grad() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->grad;
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  if (!impl_) throw ContractError("use of undefined tensor");
  impl_->grad.assign(impl_->data.size(), Real(0));
}

template <typename Real>
void Tensor<Real>::clear_grad() {
  if (impl_) impl_->grad.clear();
}

template <typename Real>
std::span<Real> Tensor<Real>::ensure_grad() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  if (!impl_) return {};
  Tensor copy(impl_->shape, impl_->data, impl_->requires_grad);
  copy.impl_->grad = impl_->grad;
  return copy;
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  if (!impl_) return {};
  return Tensor(impl_->shape, impl_->data, false);
}

template <typename Real>
void Tape<Real>::record(std::vector<Tensor<Real>> inputs, Tensor<Real> output,
                        BackwardFn backward) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  // Intermediate gradients are rebuilt on every replay; leaves accumulate.
  for (auto& node : nodes_) node.output.clear_grad();

  bool produced = false;
  for (auto& node : nodes_) {
    if (node.output.same_storage(loss)) {
      produced = true;
      break;
    }
  }
  if (!produced && !loss.requires_grad()) {
    throw ContractError("loss was not produced through this tape");
  }

  Tensor<Real> seed = loss;
  seed.ensure_grad()[0] += Real(1);

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not reachable from loss
    it->backward();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace w2s
