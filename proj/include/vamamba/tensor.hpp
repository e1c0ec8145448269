#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vamamba/error.hpp"

namespace vamamba {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // lazily allocated
  bool requires_grad = false;
  bool is_leaf = true;

  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major f64 array. Copies share storage; use clone()/detach() for
/// an independent buffer.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  /// Leaf tensor that participates in differentiation.
  static Tensor parameter(Shape shape, std::vector<double> data);

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access. Only meaningful for leaves (optimizer updates,
  /// finite-difference perturbation); writing into a recorded intermediate
  /// invalidates its backward rule.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Accumulated gradient; all zeros if nothing has been accumulated yet.
  std::span<const double> grad() const;
  void zero_grad();

  /// Copy of the values with no gradient participation.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);
  friend class Tape;
  friend Tensor record_op(const char*, Shape, std::vector<double>,
                          std::vector<Tensor>,
                          std::function<void(std::span<const double>,
                                             std::span<const double>)>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Throws NumericError if any value is NaN/Inf.
void check_finite(std::span<const double> values, const char* where);

/// Ordered record of differentiable operations for one forward pass.
///
/// Nodes are appended in execution order, so the list is already
/// topologically sorted; backward() walks it once in reverse. Only one tape
/// is active per thread (see TapeScope); ops executed with no active tape do
/// not record and produce constants.
class Tape {
 public:
  using BackwardFn =
      std::function<void(std::span<const double> out_grad,
                         std::span<const double> out_value)>;

  struct Node {
    const char* name;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Propagates d(root)/d(leaf) into every requires_grad leaf. Leaf
  /// gradients accumulate across calls; intermediate gradients are reset.
  void backward(const Tensor& root);

  void push(Node node) { nodes_.push_back(std::move(node)); }

 private:
  std::vector<Node> nodes_;
};

Tape* active_tape();

/// Makes `tape` the recording target on this thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording (e.g. inside finite-difference evaluations).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Backward on the active tape.
void backward(const Tensor& root);

/// Builds an op result. When a tape is active and any input requires grad,
/// the node is recorded with `backward_fn`, which must accumulate into the
/// input gradients (see accumulate_grad).
Tensor record_op(const char* name, Shape shape, std::vector<double> data,
                 std::vector<Tensor> inputs,
                 std::function<void(std::span<const double> out_grad,
                                    std::span<const double> out_value)>
                     backward_fn);

/// Gradient buffer of an op input, or an empty span if it does not take
/// part in differentiation.
std::span<double> grad_sink(const Tensor& input);

}  // namespace vamamba
