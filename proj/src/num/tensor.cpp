#include "kdlab/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace kdlab::num {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_next_seq{1};

void check_finite(const std::vector<double>& data) {
  for (double v : data) {
    if (!std::isfinite(v)) throw std::domain_error("tensor value is not finite");
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->shape = {1};
  impl_->data = {0.0};
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor shape " + to_string(shape) + " has a zero extent");
  }
  if (numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  check_finite(data);
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::span<double> Tensor::data_mut() {
  if (impl_->grad_fn) throw std::logic_error("data_mut on a non-leaf tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + to_string(impl_->shape));
  }
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  if (impl_->grad_fn) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = on;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, std::vector<double> data, std::shared_ptr<Node> node) {
  check_finite(data);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (node && t_grad_enabled) {
    const bool any = std::any_of(node->inputs.begin(), node->inputs.end(),
                                 [](const auto& in) { return in->requires_grad; });
    if (any) {
      node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
      impl->requires_grad = true;
      impl->grad_fn = std::move(node);
    }
  }
  return Tensor(std::move(impl));
}

void Tensor::backward() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("backward() needs a scalar root, got shape " + to_string(impl_->shape));
  }
  if (!impl_->requires_grad) return;

  if (!impl_->grad_fn) {
    if (impl_->grad.empty()) impl_->grad.assign(1, 0.0);
    impl_->grad[0] += 1.0;
    return;
  }

  // Collect every interior tensor reachable from the root that carries a
  // gradient requirement.
  std::vector<TensorImpl*> interior;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{impl_.get()};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    TensorImpl* t = stack.back();
    stack.pop_back();
    if (!t->grad_fn) continue;
    interior.push_back(t);
    for (const auto& in : t->grad_fn->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(interior.begin(), interior.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->grad_fn->seq > b->grad_fn->seq; });

  std::unordered_map<TensorImpl*, std::vector<double>> scratch;
  scratch[impl_.get()] = {1.0};

  for (TensorImpl* t : interior) {
    auto it = scratch.find(t);
    if (it == scratch.end()) continue;
    const std::vector<double> grad_out = std::move(it->second);
    scratch.erase(it);

    const Node& node = *t->grad_fn;
    std::vector<std::span<double>> slots;
    slots.reserve(node.inputs.size());
    for (const auto& in : node.inputs) {
      if (!in->requires_grad) {
        slots.emplace_back();
      } else if (!in->grad_fn) {
        if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0);
        slots.emplace_back(in->grad);
      } else {
        auto& buf = scratch[in.get()];
        if (buf.empty()) buf.assign(in->data.size(), 0.0);
        slots.emplace_back(buf);
      }
    }
    node.backward(grad_out, GradSlots(std::move(slots)));
  }
}

}  // namespace kdlab::num
