#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace isofed {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
  bool is_leaf = true;

  /// Gradient storage, zero-filled on first use.
  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 array, shared by handle.
///
/// Copies of a Tensor alias the same storage. Values are treated as
/// immutable while a tape references them; mutable_data() exists for
/// optimizer updates and test fixtures that run between tapes.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  /// Accumulated gradient; all zeros if none has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Value copy with no gradient tracking.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  friend Tensor make_tensor(std::shared_ptr<detail::TensorImpl>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

Tensor make_tensor(std::shared_ptr<detail::TensorImpl> impl);

struct TapeNode {
  const char* op = "";
  std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
  std::shared_ptr<detail::TensorImpl> output;
  /// Reads output->grad and accumulates into the grads of those inputs that
  /// require them.
  std::function<void(TapeNode&)> backward;
};

/// Define-by-run gradient tape. Nodes are appended in creation order, which
/// is a topological order of the graph; backward() walks it in reverse and
/// runs every reachable node exactly once.
class Tape {
 public:
  void record(TapeNode node);

  /// Populates gradients of every leaf that requires them with d(loss)/d(leaf).
  /// Leaf gradients accumulate across calls; intermediate gradients are
  /// recomputed from scratch on each call.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<TapeNode>& nodes() const { return nodes_; }

 private:
  std::vector<TapeNode> nodes_;
};

/// Tape receiving op records on the current thread, or nullptr.
Tape* active_tape();

/// RAII scope that routes op records on this thread to `tape`.
class GradTape {
 public:
  explicit GradTape(Tape& tape);
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

 private:
  Tape* previous_;
};

/// RAII scope that suspends recording on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

}  // namespace isofed
