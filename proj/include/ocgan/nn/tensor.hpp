#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ocgan::nn {

using Scalar = double;

using MatMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

/// Dense row-major N-d array of doubles. Copies share the underlying
/// buffer; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, Scalar v);
  static Tensor from(std::vector<int> shape, std::vector<Scalar> values);
  static Tensor scalar(Scalar v) { return from({1}, {v}); }

  bool defined() const { return buf_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  long size() const { return buf_ ? static_cast<long>(buf_->size()) : 0; }

  Scalar* data() { return buf_->data(); }
  const Scalar* data() const { return buf_->data(); }

  Scalar& operator[](long i) { return (*buf_)[static_cast<size_t>(i)]; }
  Scalar operator[](long i) const { return (*buf_)[static_cast<size_t>(i)]; }

  Scalar& at(int a) { return (*buf_)[static_cast<size_t>(a)]; }
  Scalar& at(int a, int b) { return (*buf_)[static_cast<size_t>(a) * shape_[1] + b]; }
  Scalar& at(int a, int b, int c) {
    return (*buf_)[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  Scalar& at(int a, int b, int c, int d) {
    return (*buf_)[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  Scalar at(int a) const { return (*buf_)[static_cast<size_t>(a)]; }
  Scalar at(int a, int b) const { return (*buf_)[static_cast<size_t>(a) * shape_[1] + b]; }
  Scalar at(int a, int b, int c) const {
    return (*buf_)[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  Scalar at(int a, int b, int c, int d) const {
    return (*buf_)[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  Tensor clone() const;
  /// Same buffer, new shape (element count must match).
  Tensor reshaped(std::vector<int> shape) const;

  void fill(Scalar v);
  void zero() { fill(0.0); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  /// Scalar value of a 1-element tensor.
  Scalar item() const;

  MatMap mat(int rows, int cols) { return MatMap(data(), rows, cols); }
  ConstMatMap mat(int rows, int cols) const { return ConstMatMap(data(), rows, cols); }
  VecMap vec() { return VecMap(data(), size()); }
  ConstVecMap vec() const { return ConstVecMap(data(), size()); }

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<Scalar>> buf_;
};

long numel(const std::vector<int>& shape);

}  // namespace ocgan::nn
