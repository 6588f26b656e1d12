#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmamba {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Values = Eigen::ArrayXd;

/// Raised when an operation produces NaN/Inf or hits a singular point.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on misuse of the recording tape (double backward, bad loss).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

Index numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  Values values;
  Values grad;
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// A Tensor is a shared handle; copies alias the same storage. Every
/// operation allocates a fresh result, so an op output never shares storage
/// with its inputs.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Values values, bool requires_grad = false);
  Tensor(Shape shape, std::initializer_list<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::span<const double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  Index dim(std::size_t axis) const;
  Index size() const;

  const Values& values() const;
  std::span<const double> data() const;
  double item() const;
  double at(std::initializer_list<Index> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  /// Accumulated gradient; zeros of the right size when nothing flowed.
  Values grad() const;
  void zero_grad();

  /// In-place access for leaf parameters (optimizer updates, checkpoint load).
  Values& mutable_values();

  /// Copy of the values with no gradient tracking.
  Tensor detach() const;

  bool same(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Backward rule: receives dL/d(output) and accumulates into the gradient
/// buffers of the inputs. A null slot means that input needs no gradient.
using BackwardFn =
    std::function<void(const Values& grad_output, std::span<Values* const> grad_inputs)>;

/// Ordered record of executed operations for reverse-mode differentiation.
///
/// Constructing a Tape makes it the active recorder for the current thread
/// until it is destroyed. Operations executed while no tape is active (or
/// under a NoGradGuard) are not recorded and produce constant outputs.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Accumulates d(loss)/dt into every recorded tensor that requires grad.
  /// Can be called once per tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* active();

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

 private:
  struct Record {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  std::vector<Record> records_;
  bool consumed_ = false;
  Tape* previous_ = nullptr;
  bool was_suspended_ = false;
};

/// Suspends recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Wraps the result of a primitive. Checks finiteness, and when a tape is
/// recording and any input requires grad, marks the output as requiring grad
/// and registers `backward`.
Tensor make_op_result(Shape shape, Values values, std::vector<Tensor> inputs,
                      BackwardFn backward);

}  // namespace mmamba
