#include "fsl/tensor.hpp"

#include <sstream>

#include "fsl/error.hpp"

namespace fsl {

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor() : data_(std::make_shared<detail::TensorData>()) {
  data_->shape = {1};
  data_->values = Vector::Zero(1);
}

Tensor::Tensor(Shape shape, Vector values, bool requires_grad)
    : data_(std::make_shared<detail::TensorData>()) {
  for (Index e : shape) {
    if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  data_->shape = std::move(shape);
  data_->values = std::move(values);
  data_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = shape_numel(shape);
  return Tensor(std::move(shape), Vector::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const Index n = shape_numel(shape);
  return Tensor(std::move(shape), Vector::Constant(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, bool requires_grad) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, Vector::Constant(1, value), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return data_->values[0];
}

double Tensor::at(std::initializer_list<Index> index) const {
  const Shape& s = data_->shape;
  if (index.size() != s.size()) throw DimensionError("index rank does not match tensor rank");
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= s[axis]) throw DimensionError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return data_->values[flat];
}

Tensor& Tensor::set_requires_grad(bool on) {
  data_->requires_grad = on;
  if (!on) clear_grad();
  return *this;
}

const Vector& Tensor::grad() const {
  if (!data_->has_grad) throw StateError("tensor has no gradient");
  return data_->grad;
}

void Tensor::accumulate_grad(const Eigen::Ref<const Vector>& delta) {
  if (delta.size() != numel()) throw DimensionError("gradient size does not match tensor");
  if (!data_->has_grad) {
    data_->grad = delta;
    data_->has_grad = true;
  } else {
    data_->grad += delta;
  }
}

void Tensor::zero_grad() {
  data_->grad = Vector::Zero(numel());
  data_->has_grad = true;
}

void Tensor::clear_grad() {
  data_->grad.resize(0);
  data_->has_grad = false;
}

Tensor Tensor::clone() const {
  Tensor t(data_->shape, data_->values, data_->requires_grad);
  if (data_->has_grad) t.accumulate_grad(data_->grad);
  return t;
}

Tensor Tensor::detach() const { return Tensor(data_->shape, data_->values, false); }

}  // namespace fsl
