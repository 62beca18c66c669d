#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mwam/error.hpp"
#include "mwam/scalar.hpp"

namespace mwam {

/// Dense row-major matrix. Used for image planes, coefficient blocks and
/// network tensors alike.
template <typename T = double>
class BasicMatrix {
 public:
  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "matrix data size does not match shape");
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool same_shape(const BasicMatrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  BasicMatrix transposed() const {
    BasicMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  BasicMatrix& operator+=(const BasicMatrix& o) {
    require(same_shape(o), "matrix shape mismatch in +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  BasicMatrix& operator-=(const BasicMatrix& o) {
    require(same_shape(o), "matrix shape mismatch in -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  BasicMatrix& operator*=(T s) noexcept {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend BasicMatrix operator+(BasicMatrix a, const BasicMatrix& b) { return a += b; }
  friend BasicMatrix operator-(BasicMatrix a, const BasicMatrix& b) { return a -= b; }
  friend BasicMatrix operator*(BasicMatrix a, T s) { return a *= s; }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;

/// C = A * B
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  BasicMatrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* out = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T(0)) continue;
      const T* brow = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

/// C = A * B^T  (rows of A dotted with rows of B)
template <typename T>
BasicMatrix<T> matmul_bt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.cols() == b.cols(), "matmul_bt: inner dimensions differ");
  BasicMatrix<T> c(a.rows(), b.rows());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const T* brow = b.row(j).data();
      T s = T(0);
      for (std::size_t k = 0; k < n; ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

/// C = A^T * B
template <typename T>
BasicMatrix<T> matmul_at(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.rows() == b.rows(), "matmul_at: inner dimensions differ");
  BasicMatrix<T> c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const T* arow = a.row(k).data();
    const T* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T aki = arow[i];
      if (aki == T(0)) continue;
      T* out = c.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

template <typename T>
T frobenius_norm(const BasicMatrix<T>& m) {
  T s = T(0);
  for (const T& v : m.flat()) s += v * v;
  return num::sqrt(s);
}

template <typename T>
T max_abs_diff(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.same_shape(b), "max_abs_diff: shape mismatch");
  T m = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    T d = a.flat()[i] - b.flat()[i];
    if (d < T(0)) d = -d;
    if (d > m) m = d;
  }
  return m;
}

inline bool all_finite(const Matrix& m) {
  return std::all_of(m.flat().begin(), m.flat().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mwam
