#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kdlab::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorImpl;

// Gradient destinations handed to a node's backward rule, one per input.
// An empty span means the corresponding input does not need a gradient.
class GradSlots {
 public:
  explicit GradSlots(std::vector<std::span<double>> slots) : slots_(std::move(slots)) {}
  std::span<double> operator[](std::size_t i) const { return slots_[i]; }
  bool wants(std::size_t i) const { return !slots_[i].empty(); }

 private:
  std::vector<std::span<double>> slots_;
};

// One recorded operation on the tape. Nodes own their inputs, never their
// outputs, so the graph stays acyclic.
class Node {
 public:
  virtual ~Node() = default;
  virtual const char* name() const = 0;
  // Adds d(root)/d(input_k) into slots[k] given d(root)/d(output).
  virtual void backward(std::span<const double> grad_out, const GradSlots& slots) const = 0;

  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::uint64_t seq = 0;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until the first backward that reaches it
  std::shared_ptr<Node> grad_fn;
};

// Reference-counted handle to a dense row-major array of doubles. Copies of
// a Tensor share storage; operations always produce new tensors.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Direct write access for leaf parameters (optimizer updates, checkpoint
  // loading). Never used by differentiable operations.
  std::span<double> data_mut();
  double item() const;
  double at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad();

  // Same values, no tape history, no gradient requirement.
  Tensor detach() const;

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  // calls; intermediate gradients live only for the duration of the call.
  void backward() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::shared_ptr<Node>);

  std::shared_ptr<TensorImpl> impl_;
};

bool grad_enabled();

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. `node` may be null; when it is non-null and recording
// is enabled and any of its inputs requires a gradient, the node is stamped
// and attached.
Tensor make_result(Shape shape, std::vector<double> data, std::shared_ptr<Node> node);

}  // namespace kdlab::num
