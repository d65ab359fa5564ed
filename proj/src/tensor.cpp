#include "linoss/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <cblas.h>

namespace linoss {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
  if (x.size() != w.cols() || y.size() != w.rows())
    throw std::invalid_argument("matvec: dimension mismatch");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.data().data() + r * w.cols();
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_acc(const Matrix& w, std::span<const double> x, std::span<double> y) {
  if (x.size() != w.rows() || y.size() != w.cols())
    throw std::invalid_argument("matvec_t_acc: dimension mismatch");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.data().data() + r * w.cols();
    const double xr = x[r];
    for (std::size_t c = 0; c < w.cols(); ++c) y[c] += wr[c] * xr;
  }
}

void outer_acc(Matrix& w, std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() != w.rows() || b.size() != w.cols())
    throw std::invalid_argument("outer_acc: dimension mismatch");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double* wr = w.data().data() + r * w.cols();
    const double ar = alpha * a[r];
    for (std::size_t c = 0; c < w.cols(); ++c) wr[c] += ar * b[c];
  }
}

namespace {

// One BLAS thread per call; callers parallelize over sequences.
void blas_single_thread() {
  static const bool once = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)once;
}

}  // namespace

Matrix apply_rows(const Matrix& w, const Matrix& x) {
  if (x.cols() != w.cols()) throw std::invalid_argument("apply_rows: width mismatch");
  Matrix out(x.rows(), w.rows());
  if (out.empty() || w.cols() == 0) return out;
  blas_single_thread();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(x.rows()), int(w.rows()),
              int(w.cols()), 1.0, x.data().data(), int(x.cols()), w.data().data(),
              int(w.cols()), 0.0, out.data().data(), int(out.cols()));
  return out;
}

Matrix apply_rows(const Matrix& w, const Vec& bias, const Matrix& x) {
  if (bias.size() != w.rows()) throw std::invalid_argument("apply_rows: bias size mismatch");
  Matrix out = apply_rows(w, x);
  for (std::size_t n = 0; n < out.rows(); ++n) {
    auto r = out.row(n);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += bias[i];
  }
  return out;
}

void apply_rows_backward(const Matrix& w, const Matrix& x, const Matrix& d_out, Matrix& d_w,
                         Matrix* d_x) {
  if (x.cols() != w.cols() || d_out.cols() != w.rows() || d_out.rows() != x.rows() ||
      d_w.rows() != w.rows() || d_w.cols() != w.cols() ||
      (d_x && (d_x->rows() != x.rows() || d_x->cols() != x.cols())))
    throw std::invalid_argument("apply_rows_backward: dimension mismatch");
  if (x.rows() == 0 || w.empty()) return;
  blas_single_thread();
  const int n = int(x.rows()), r = int(w.rows()), c = int(w.cols());
  // dW += dOut^T X
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, r, c, n, 1.0, d_out.data().data(), r,
              x.data().data(), c, 1.0, d_w.data().data(), c);
  // dX += dOut W
  if (d_x)
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, c, r, 1.0, d_out.data().data(), r,
                w.data().data(), c, 1.0, d_x->data().data(), c);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace linoss
