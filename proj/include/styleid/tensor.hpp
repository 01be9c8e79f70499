#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "styleid/errors.hpp"

namespace styleid {

using Shape = std::vector<int>;

inline Eigen::Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1},
                         [](Eigen::Index a, int b) { return a * b; });
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major n-d array. Values are immutable once constructed and
/// storage is shared between copies, so tensors are cheap to pass around
/// and safe to read from several threads.
///
/// Every constructor rejects non-finite data with NumericError.
template <typename Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;
  using VectorType = Vector<Scalar>;
  using ConstVectorMap = Eigen::Map<const VectorType>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  /// The empty tensor; `empty()` is true and no accessor other than shape() is valid.
  Tensor() = default;

  Tensor(Shape shape, VectorType data) : shape_(std::move(shape)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data.size()) {
      throw ShapeError("tensor: shape " + shape_string(shape_) + " does not hold " +
                       std::to_string(data.size()) + " elements");
    }
    if (!all_finite(data)) throw NumericError("tensor: non-finite element");
    data_ = std::make_shared<const VectorType>(std::move(data));
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), VectorType(Eigen::Map<const VectorType>(
                                     values.begin(), static_cast<Eigen::Index>(values.size())))) {}

  Tensor(Shape shape, const RowMatrix<Scalar>& m)
      : Tensor(std::move(shape), VectorType(Eigen::Map<const VectorType>(m.data(), m.size()))) {}

  static Tensor zeros(Shape shape) { return constant(std::move(shape), Scalar(0)); }
  static Tensor constant(Shape shape, Scalar value) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), VectorType(VectorType::Constant(n, value)));
  }
  static Tensor scalar(Scalar value) { return constant({1}, value); }

  /// Builds a tensor from a generator called once per flat index, in order.
  template <typename Fn>
  static Tensor generate(Shape shape, Fn&& fn) {
    VectorType v(shape_size(shape));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(fn(i));
    return Tensor(std::move(shape), std::move(v));
  }

  bool empty() const { return data_ == nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Eigen::Index size() const { return data_ ? data_->size() : 0; }

  std::span<const Scalar> data() const {
    return data_ ? std::span<const Scalar>(data_->data(), static_cast<std::size_t>(data_->size()))
                 : std::span<const Scalar>();
  }
  const VectorType& vec() const { return *data_; }

  /// Row-major matrix view; rank-2 tensors only.
  ConstMatrixMap matrix() const {
    if (rank() != 2) throw ShapeError("tensor: matrix view needs rank 2, got " + shape_string(shape_));
    return ConstMatrixMap(data_->data(), shape_[0], shape_[1]);
  }
  /// Reinterprets the flat data as rows x cols (rows * cols must equal size()).
  ConstMatrixMap matrix(Eigen::Index rows, Eigen::Index cols) const {
    if (rows * cols != size()) throw ShapeError("tensor: bad matrix view");
    return ConstMatrixMap(data_->data(), rows, cols);
  }

  Scalar operator[](Eigen::Index i) const { return (*data_)[i]; }
  Scalar item() const {
    if (size() != 1) throw ShapeError("tensor: item() on non-scalar " + shape_string(shape_));
    return (*data_)[0];
  }

  /// Same storage, new shape.
  Tensor reshaped(Shape shape) const {
    validate_shape(shape);
    if (shape_size(shape) != size()) {
      throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_->template cast<Other>().eval());
  }

  /// True when both tensors have the same shape and bit-identical contents.
  bool identical(const Tensor& other) const {
    if (shape_ != other.shape_) return false;
    if (data_ == other.data_) return true;
    return std::memcmp(data_->data(), other.data_->data(),
                       static_cast<std::size_t>(size()) * sizeof(Scalar)) == 0;
  }

 private:
  // x * 0 is NaN exactly when x is NaN or infinite; the vectorised sum is
  // much cheaper than Eigen's allFinite().
  static bool all_finite(const VectorType& v) { return (v.array() * Scalar(0)).sum() == Scalar(0); }

  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: shape must have at least one dimension");
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_string(shape));
    }
  }

  Shape shape_;
  std::shared_ptr<const VectorType> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace styleid
