#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace recattn {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for misuse of the tape (non-scalar loss, repeated backward, ...).
class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, which is how
/// parameters recorded on a tape receive their gradients. Use clone() for an
/// independent deep copy. A rank-0 shape ({}) denotes a scalar.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  bool defined() const { return impl_ != nullptr; }

  std::span<const double> data() const;
  /// Writable view. Only for leaves (parameters, inputs) outside of a live
  /// forward/backward pass.
  std::span<double> mutable_data() const;

  bool requires_grad() const;
  /// Gradient buffer; empty span when requires_grad() is false.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  double item() const;
  Tensor clone(bool requires_grad = false) const;

  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of executed operations; backward() replays it in reverse.
///
/// A tape supports exactly one backward pass. Build a new tape (or reset())
/// for the next forward pass. A non-recording tape produces plain values and
/// keeps no history, which is what inference uses.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  /// True when an op over these inputs must be recorded.
  bool needs_grad(std::initializer_list<const Tensor*> inputs) const;
  bool needs_grad(std::span<const Tensor> inputs) const;

  void record(const char* op, Tensor output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule once, newest first.
  void backward(const Tensor& loss);

  void reset();

  /// Names of recorded ops in execution order.
  std::vector<std::string> op_names() const;
  /// Names of ops in the order backward() visited them (filled by backward).
  const std::vector<std::string>& visit_log() const { return visit_log_; }

  /// Scales the output gradient handed to every backward rule of `op` by
  /// `factor`. Only meant for negative-control gradient checks.
  void inject_backward_fault(std::string op, double factor = 1.5);

  /// When set, relu appends the sign pattern (x > 0) of every input it sees,
  /// recording or not. Gradient checks use it to spot probes that cross a kink.
  void log_kinks(std::vector<bool>* log) { kink_log_ = log; }
  std::vector<bool>* kink_log() const { return kink_log_; }

 private:
  struct Node {
    const char* op;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::string> visit_log_;
  std::string fault_op_;
  double fault_factor_ = 1.0;
  std::vector<bool>* kink_log_ = nullptr;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace recattn
