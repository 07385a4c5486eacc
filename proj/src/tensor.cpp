#include "recattn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace recattn {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (recattn::numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " needs " +
                     std::to_string(recattn::numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
  if (requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = recattn::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() const { return impl_->data; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() const { return impl_->grad; }

void Tensor::zero_grad() const { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
  return impl_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(impl_->shape, impl_->data, requires_grad);
}

bool Tape::needs_grad(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

bool Tape::needs_grad(std::span<const Tensor> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

void Tape::record(const char* op, Tensor output, BackwardFn backward) {
  if (consumed_) throw AutodiffError("tape already ran backward; reset() before recording");
  nodes_.push_back(Node{op, std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw AutodiffError("backward called twice without a fresh forward pass");
  }
  if (loss.numel() != 1) {
    throw AutodiffError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!std::isfinite(loss.item())) throw AutodiffError("loss is not finite");
  consumed_ = true;
  visit_log_.clear();
  if (!loss.requires_grad()) return;

  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;

  std::vector<double> scaled;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    visit_log_.emplace_back(it->op);
    std::span<const double> g = it->output.grad();
    if (!fault_op_.empty() && fault_op_ == it->op) {
      scaled.assign(g.begin(), g.end());
      for (auto& v : scaled) v *= fault_factor_;
      g = scaled;
    }
    it->backward(g);
  }
}

void Tape::reset() {
  nodes_.clear();
  visit_log_.clear();
  consumed_ = false;
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.emplace_back(n.op);
  return names;
}

void Tape::inject_backward_fault(std::string op, double factor) {
  fault_op_ = std::move(op);
  fault_factor_ = factor;
}

}  // namespace recattn
