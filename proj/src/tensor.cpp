#include "vamamba/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vamamba {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::span<double> TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

Tensor::Tensor() : Tensor(Shape{}, 0.0) {}

Tensor::Tensor(Shape shape, double fill)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= dim()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool flag) {
  if (!impl_->is_leaf) throw Error("requires_grad can only be changed on leaf tensors");
  impl_->requires_grad = flag;
}

std::span<const double> Tensor::grad() const { return impl_->grad_buffer(); }

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

void check_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + where);
    }
  }
}

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward requires a scalar root, got " + shape_str(root.shape()));
  }
  const auto& root_impl = root.impl();
  if (!root_impl->requires_grad) return;  // constant root: nothing flows
  if (root_impl->is_leaf) {
    root_impl->grad_buffer()[0] += 1.0;
    return;
  }

  std::ptrdiff_t root_index = -1;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& out = nodes_[i].output;
    std::fill(out->grad.begin(), out->grad.end(), 0.0);
    if (out == root_impl) root_index = static_cast<std::ptrdiff_t>(i);
  }
  if (root_index < 0) throw Error("backward root was not recorded on this tape");

  root_impl->grad_buffer()[0] = 1.0;
  for (std::ptrdiff_t i = root_index; i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.output->grad.empty()) continue;  // unreachable from root
    node.backward(node.output->grad, node.output->data);
    for (const auto& in : node.inputs) {
      if (in->requires_grad && !in->grad.empty()) check_finite(in->grad, node.name);
    }
  }
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& root) {
  Tape* tape = active_tape();
  if (!tape) {
    if (root.numel() != 1) {
      throw ShapeError("backward requires a scalar root, got " + shape_str(root.shape()));
    }
    if (root.requires_grad() && root.is_leaf()) {
      root.impl()->grad_buffer()[0] += 1.0;
    }
    return;
  }
  tape->backward(root);
}

Tensor record_op(const char* name, Shape shape, std::vector<double> data,
                 std::vector<Tensor> inputs,
                 std::function<void(std::span<const double>, std::span<const double>)>
                     backward_fn) {
  check_finite(data, name);
  Tensor out(std::move(shape), std::move(data));
  Tape* tape = active_tape();
  if (!tape) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;

  out.impl_->requires_grad = true;
  out.impl_->is_leaf = false;
  Tape::Node node;
  node.name = name;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.impl());
  node.output = out.impl_;
  node.backward = std::move(backward_fn);
  tape->push(std::move(node));
  return out;
}

std::span<double> grad_sink(const Tensor& input) {
  if (!input.requires_grad()) return {};
  return input.impl()->grad_buffer();
}

}  // namespace vamamba
