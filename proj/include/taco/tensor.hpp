#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "taco/error.hpp"

namespace taco {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major tensor with value semantics. The contiguous layout is part of
// the contract: reshape is a metadata change over the same flat order.
template <typename S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), S(0)) {}
  Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
    TACO_CHECK(static_cast<int64_t>(data_.size()) == shape_numel(shape_), ConfigError,
               "tensor data size does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor scalar(S v) { return Tensor({1}, {v}); }
  static Tensor identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.data_[i * n + i] = S(1);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }

  S& operator[](int64_t i) { return data_[i]; }
  S operator[](int64_t i) const { return data_[i]; }

  S& at2(int64_t i, int64_t j) { return data_[i * shape_[1] + j]; }
  S at2(int64_t i, int64_t j) const { return data_[i * shape_[1] + j]; }

  Tensor reshaped(Shape s) const {
    TACO_CHECK(shape_numel(s) == numel(), UsageError,
               "reshape " + shape_str(shape_) + " -> " + shape_str(s));
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }

  // 2-D Eigen view: first dim x rest.
  Eigen::Map<RowMat<S>> mat() {
    int64_t r = ndim() ? shape_[0] : 1;
    return Eigen::Map<RowMat<S>>(data_.data(), r, r ? numel() / r : 0);
  }
  Eigen::Map<const RowMat<S>> mat() const {
    int64_t r = ndim() ? shape_[0] : 1;
    return Eigen::Map<const RowMat<S>>(data_.data(), r, r ? numel() / r : 0);
  }
  Eigen::Map<RowMat<S>> mat(int64_t rows, int64_t cols) {
    return Eigen::Map<RowMat<S>>(data_.data(), rows, cols);
  }
  Eigen::Map<const RowMat<S>> mat(int64_t rows, int64_t cols) const {
    return Eigen::Map<const RowMat<S>>(data_.data(), rows, cols);
  }

  bool all_finite() const {
    for (S v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> t(shape_);
    for (int64_t i = 0; i < numel(); ++i) t[i] = static_cast<T>(data_[i]);
    return t;
  }

 private:
  Shape shape_;
  std::vector<S> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Observations stay uint8 until they enter an encoder.
using ByteTensor = Tensor<uint8_t>;

template <typename S>
S max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  TACO_CHECK(a.same_shape(b), UsageError, "max_abs_diff shape mismatch");
  S m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace taco
