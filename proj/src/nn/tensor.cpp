#include "ocgan/nn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ocgan::nn {

long numel(const std::vector<int>& shape) {
  long n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      buf_(std::make_shared<std::vector<Scalar>>(static_cast<size_t>(numel(shape_)), 0.0)) {}

Tensor Tensor::full(std::vector<int> shape, Scalar v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<Scalar> values) {
  if (numel(shape) != static_cast<long>(values.size()))
    throw std::invalid_argument("Tensor::from: value count does not match shape");
  Tensor t;
  t.shape_ = std::move(shape);
  t.buf_ = std::make_shared<std::vector<Scalar>>(std::move(values));
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.buf_ = buf_ ? std::make_shared<std::vector<Scalar>>(*buf_) : nullptr;
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (numel(shape) != size())
    throw std::invalid_argument("reshape: element count mismatch (" + shape_str() + ")");
  Tensor t;
  t.shape_ = std::move(shape);
  t.buf_ = buf_;
  return t;
}

void Tensor::fill(Scalar v) {
  for (auto& x : *buf_) x = v;
}

bool Tensor::all_finite() const {
  for (Scalar x : *buf_)
    if (!std::isfinite(x)) return false;
  return true;
}

Scalar Tensor::item() const {
  if (size() != 1) throw std::logic_error("item(): tensor has " + std::to_string(size()) + " elements");
  return (*buf_)[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ")";
  return os.str();
}

}  // namespace ocgan::nn
