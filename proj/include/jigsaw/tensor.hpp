#pragma once

#include <Eigen/Core>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace jigsaw {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& s);

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major n-d array. Activations use [N, C, H, W] or [N, D].
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(Vector<Scalar>::Zero(shape_size(shape_))) {}
  Tensor(Shape shape, Vector<Scalar> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_))
      throw std::invalid_argument("Tensor: value count does not match shape " + shape_string(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    t.values_.setConstant(v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return values_.size(); }

  Vector<Scalar>& values() { return values_; }
  const Vector<Scalar>& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }
  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  /// Views the storage as a rows x (size/rows) row-major matrix.
  MatrixMap matrix(Index rows) { return MatrixMap(values_.data(), rows, rows ? size() / rows : 0); }
  ConstMatrixMap matrix(Index rows) const { return ConstMatrixMap(values_.data(), rows, rows ? size() / rows : 0); }
  /// [dim(0), rest] view.
  MatrixMap matrix() { return matrix(shape_.empty() ? 1 : shape_[0]); }
  ConstMatrixMap matrix() const { return matrix(shape_.empty() ? 1 : shape_[0]); }

  Tensor reshaped(Shape shape) const& {
    if (shape_size(shape) != size()) throw std::invalid_argument("reshape: size mismatch");
    return Tensor(std::move(shape), values_);
  }
  Tensor reshaped(Shape shape) && {
    if (shape_size(shape) != size()) throw std::invalid_argument("reshape: size mismatch");
    return Tensor(std::move(shape), std::move(values_));
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  Vector<Scalar> values_;
};

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace jigsaw
