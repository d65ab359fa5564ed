#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace linoss {

using Vec = std::vector<double>;

// Dense row-major matrix. For sequences, rows index time steps.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = W x
void matvec(const Matrix& w, std::span<const double> x, std::span<double> y);
// y += W^T x
void matvec_t_acc(const Matrix& w, std::span<const double> x, std::span<double> y);
// W += alpha * a b^T
void outer_acc(Matrix& w, std::span<const double> a, std::span<const double> b, double alpha = 1.0);

// Row-wise affine map of a sequence: out[n] = W x[n] (+ bias).
Matrix apply_rows(const Matrix& w, const Matrix& x);
Matrix apply_rows(const Matrix& w, const Vec& bias, const Matrix& x);
// Backward of apply_rows: dW += dOut^T X, dX += dOut W.
void apply_rows_backward(const Matrix& w, const Matrix& x, const Matrix& d_out, Matrix& d_w,
                         Matrix* d_x);

bool all_finite(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace linoss
