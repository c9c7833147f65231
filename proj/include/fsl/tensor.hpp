#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace fsl {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixMap = Eigen::Map<RowMatrix>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;

Index shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorData {
  Shape shape;
  Vector values;
  bool requires_grad = false;
  bool has_grad = false;
  Vector grad;
};
}  // namespace detail

/// Shared handle to an n-dimensional block of doubles (row-major, channel
/// first for images). Copies of a Tensor alias the same storage; use
/// `clone()` for a deep copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Vector values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return data_->shape; }
  Index dim(std::size_t axis) const { return data_->shape.at(axis); }
  std::size_t ndim() const { return data_->shape.size(); }
  Index numel() const { return data_->values.size(); }

  const Vector& values() const { return data_->values; }
  Vector& values() { return data_->values; }
  double item() const;
  double at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return data_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return data_->has_grad; }
  const Vector& grad() const;
  /// Adds `delta` into the gradient slot, allocating it zeroed on first use.
  void accumulate_grad(const Eigen::Ref<const Vector>& delta);
  void zero_grad();
  void clear_grad();

  Tensor clone() const;
  /// Same values, fresh storage, detached from any gradient.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }
  const detail::TensorData* id() const { return data_.get(); }

 private:
  std::shared_ptr<detail::TensorData> data_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

}  // namespace fsl
