#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace vgw {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

/// Shared storage behind Tensor handles. Values are treated as immutable once
/// an op has produced them; grad is the only field mutated afterwards.
template <class S>
struct TensorData {
  Shape shape;
  std::vector<S> values;
  std::vector<S> grad;  // empty until backward reaches this tensor
  bool requires_grad = false;
};

/// Dense row-major tensor handle (NCHW canonical for images). Copying a
/// Tensor copies the handle, not the storage.
template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    auto n = shape_numel(shape);
    return Tensor(std::make_shared<TensorData<S>>(
        TensorData<S>{std::move(shape), std::vector<S>(size_t(n), S(0)), {}, false}));
  }
  static Tensor full(Shape shape, S value) {
    auto n = shape_numel(shape);
    return Tensor(std::make_shared<TensorData<S>>(
        TensorData<S>{std::move(shape), std::vector<S>(size_t(n), value), {}, false}));
  }
  static Tensor from(Shape shape, std::vector<S> values) {
    if (shape_numel(shape) != int64_t(values.size()))
      throw std::runtime_error("Tensor::from: " + shape_str(shape) + " does not hold " +
                               std::to_string(values.size()) + " values");
    return Tensor(std::make_shared<TensorData<S>>(
        TensorData<S>{std::move(shape), std::move(values), {}, false}));
  }
  static Tensor scalar(S value) { return from({1}, {value}); }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return int(d_->shape.size()); }
  int dim(int i) const { return d_->shape[size_t(i)]; }
  int64_t numel() const { return int64_t(d_->values.size()); }

  S* data() { return d_->values.data(); }
  const S* data() const { return d_->values.data(); }
  std::vector<S>& values() { return d_->values; }
  const std::vector<S>& values() const { return d_->values; }

  S& at(int i) { return d_->values[size_t(i)]; }
  S at(int i) const { return d_->values[size_t(i)]; }
  S& at(int n, int c, int h, int w) { return d_->values[size_t(offset(n, c, h, w))]; }
  S at(int n, int c, int h, int w) const { return d_->values[size_t(offset(n, c, h, w))]; }

  int64_t offset(int n, int c, int h, int w) const {
    const Shape& s = d_->shape;
    return ((int64_t(n) * s[1] + c) * s[2] + h) * s[3] + w;
  }

  S item() const {
    if (numel() != 1)
      throw std::runtime_error("Tensor::item: tensor of shape " + shape_str(shape()) +
                               " is not a scalar");
    return d_->values[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
  }
  /// Accumulated gradient; empty when backward never reached this tensor.
  const std::vector<S>& grad() const { return d_->grad; }
  void zero_grad() { d_->grad.clear(); }

  /// Value copy that does not participate in gradient flow.
  Tensor detach() const {
    return Tensor(std::make_shared<TensorData<S>>(TensorData<S>{d_->shape, d_->values, {}, false}));
  }

  const std::shared_ptr<TensorData<S>>& node() const { return d_; }
  static Tensor wrap(std::shared_ptr<TensorData<S>> d) { return Tensor(std::move(d)); }

 private:
  explicit Tensor(std::shared_ptr<TensorData<S>> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData<S>> d_;
};

}  // namespace vgw
