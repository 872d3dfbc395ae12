#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pan {

// Thrown when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major matrix of doubles. Vectors are column matrices (d x 1)
// unless stated otherwise.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(rows_, cols_));
    }
  }

  // Row-wise literal: Matrix{{1, 2}, {3, 4}}.
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_vector() const { return rows_ == 1 || cols_ == 1; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Row r as a column vector.
  Matrix row_vector(std::size_t r) const {
    auto v = row(r);
    return Matrix(cols_, 1, std::vector<double>(v.begin(), v.end()));
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape() const { return shape_string(rows_, cols_); }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }

 private:
  void require_same_shape(const Matrix& o, const char* op) const {
    if (!same_shape(o)) {
      throw DimensionError(std::string("Matrix ") + op + ": shape mismatch " + shape() +
                           " vs " + o.shape());
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + a.shape() + " x " + b.shape());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * br[j];
    }
  }
  return out;
}

// a^T * b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: shape mismatch " + a.shape() + "^T x " + b.shape());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ar = a.row(k).data();
    const double* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * br[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("hadamard: shape mismatch " + a.shape() + " vs " + b.shape());
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

// out += scale * x * y^T for column vectors x, y.
inline void add_outer(Matrix& out, const Matrix& x, const Matrix& y, double scale = 1.0) {
  if (out.rows() != x.size() || out.cols() != y.size()) {
    throw DimensionError("add_outer: " + out.shape() + " vs outer of " + x.shape() + ", " +
                         y.shape());
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = scale * x[i];
    if (xi == 0.0) continue;
    double* o = out.row(i).data();
    for (std::size_t j = 0; j < y.size(); ++j) o[j] += xi * y[j];
  }
}

inline double dot(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: size mismatch " + a.shape() + " vs " + b.shape());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sum(const Matrix& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return s;
}

// Index of the largest entry (first on ties).
inline std::size_t argmax(const Matrix& a) {
  if (a.empty()) throw std::invalid_argument("argmax: empty matrix");
  return static_cast<std::size_t>(std::max_element(a.data().begin(), a.data().end()) - a.data().begin());
}

inline double frobenius_norm(const Matrix& a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(const Matrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double x) { return std::isfinite(x); });
}

// Stacks two column vectors into one: [a; b].
inline Matrix vconcat(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("vconcat: column mismatch " + a.shape() + " vs " + b.shape());
  }
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.size());
  return out;
}

// Rows [begin, begin + count) of a.
inline Matrix row_slice(const Matrix& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw DimensionError("row_slice: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + a.shape());
  }
  Matrix out(count, a.cols());
  std::copy(a.data().begin() + begin * a.cols(), a.data().begin() + (begin + count) * a.cols(),
            out.data().begin());
  return out;
}

}  // namespace pan
