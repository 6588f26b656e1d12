#include "mmamba/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace mmamba {

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local bool g_recording_suspended = false;

void check_shape(const Shape& shape) {
  for (Index extent : shape) {
    if (extent < 1) {
      throw std::invalid_argument("tensor extents must be positive, got " + shape_string(shape));
    }
  }
}
}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, Values values, bool requires_grad) {
  check_shape(shape);
  if (numel(shape) != values.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_string(shape));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values, bool requires_grad)
    : Tensor(std::move(shape),
             Values(Eigen::Map<const Values>(values.begin(), static_cast<Index>(values.size()))),
             requires_grad) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  const Index n = numel(shape);
  return Tensor(std::move(shape), Values::Constant(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, Values::Constant(1, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::span<const double> values, bool requires_grad) {
  return Tensor(std::move(shape),
                Values(Eigen::Map<const Values>(values.data(), static_cast<Index>(values.size()))),
                requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->shape;
}

Index Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " +
                            shape_string(s));
  }
  return s[axis];
}

Index Tensor::size() const { return numel(shape()); }

const Values& Tensor::values() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->values;
}

std::span<const double> Tensor::data() const {
  const Values& v = values();
  return {v.data(), static_cast<std::size_t>(v.size())};
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() needs a single-element tensor, got " +
                                shape_string(shape()));
  }
  return values()(0);
}

double Tensor::at(std::initializer_list<Index> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw std::invalid_argument("index rank mismatch");
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= s[axis]) throw std::out_of_range("tensor index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return values()(flat);
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.size() == impl_->values.size(); }

Values Tensor::grad() const {
  if (has_grad()) return impl_->grad;
  return Values::Zero(size());
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.resize(0);
}

Values& Tensor::mutable_values() {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->values;
}

Tensor Tensor::detach() const { return Tensor(shape(), values(), false); }

Tape::Tape() : previous_(g_active_tape), was_suspended_(g_recording_suspended) {
  g_active_tape = this;
  g_recording_suspended = false;
}

Tape::~Tape() {
  g_active_tape = previous_;
  g_recording_suspended = was_suspended_;
}

Tape* Tape::active() { return g_recording_suspended ? nullptr : g_active_tape; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  if (consumed_) throw TapeError("cannot record onto a tape after backward()");
  records_.push_back(Record{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward() already called on this tape");
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw TapeError("loss is not connected to any tensor that requires grad");
  }
  consumed_ = true;

  auto* root = loss.impl();
  if (root->grad.size() != 1) root->grad = Values::Zero(1);
  root->grad(0) += 1.0;

  std::vector<Values*> slots;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    auto* out = it->output.impl();
    if (out->grad.size() != out->values.size()) continue;
    slots.assign(it->inputs.size(), nullptr);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      auto* in = it->inputs[i].impl();
      if (!in->requires_grad) continue;
      if (in->grad.size() != in->values.size()) in->grad = Values::Zero(in->values.size());
      slots[i] = &in->grad;
    }
    it->backward(out->grad, slots);
  }
  // Intermediate gradients are only needed during the sweep.
  for (auto& rec : records_) rec.output.zero_grad();
  records_.clear();
}

NoGradGuard::NoGradGuard() : previous_(g_recording_suspended) { g_recording_suspended = true; }

NoGradGuard::~NoGradGuard() { g_recording_suspended = previous_; }

Tensor make_op_result(Shape shape, Values values, std::vector<Tensor> inputs,
                      BackwardFn backward) {
  if (!values.allFinite()) {
    throw NumericError("non-finite value produced by operation (output shape " +
                       shape_string(shape) + ")");
  }
  Tape* tape = Tape::active();
  bool needs_grad = false;
  if (tape != nullptr) {
    for (const Tensor& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  Tensor out(std::move(shape), std::move(values), needs_grad);
  if (needs_grad) tape->record(std::move(inputs), out, std::move(backward));
  return out;
}

}  // namespace mmamba
