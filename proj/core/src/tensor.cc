#include "isofed/tensor.h"

#include <algorithm>
#include <functional>
#include <numeric>

#include "isofed/errors.h"

namespace isofed {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::span<double> detail::TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  if (values.size() != shape_numel(shape))
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl) {
  return Tensor(std::move(impl));
}

namespace {
const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& p) {
  if (!p) throw Error("use of an undefined tensor");
  return *p;
}
}  // namespace

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
  checked(impl_);
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool on) {
  checked(impl_);
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& impl = checked(impl_);
  if (impl.grad.empty()) return std::vector<double>(impl.data.size(), 0.0);
  return impl.grad;
}

void Tensor::zero_grad() {
  checked(impl_);
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), checked(impl_).data); }

void Tape::record(TapeNode node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward on an undefined tensor");
  if (loss.numel() != 1)
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_str(loss.shape()));
  const auto& root = loss.impl();
  if (root->is_leaf) {
    if (!root->requires_grad)
      throw Error("backward: loss is not connected to the tape");
    root->grad_buffer()[0] += 1.0;
    return;
  }

  auto it = std::find_if(nodes_.begin(), nodes_.end(),
                         [&](const TapeNode& n) { return n.output == root; });
  if (it == nodes_.end())
    throw Error("backward: loss was not recorded on this tape");
  const std::size_t root_index = static_cast<std::size_t>(it - nodes_.begin());

  for (std::size_t i = 0; i <= root_index; ++i) nodes_[i].output->grad.clear();
  root->grad_buffer()[0] = 1.0;

  for (std::size_t i = root_index + 1; i-- > 0;) {
    TapeNode& node = nodes_[i];
    if (node.output->grad.empty()) continue;  // not on a path from the loss
    node.backward(node);
  }
}

namespace {
thread_local Tape* t_active_tape = nullptr;
}

Tape* active_tape() { return t_active_tape; }

GradTape::GradTape(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
GradTape::~GradTape() { t_active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(t_active_tape) { t_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { t_active_tape = previous_; }

}  // namespace isofed
