#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <vector>

#include "linoss/lincore.hpp"

namespace oracle {

using Mat2 = Eigen::Matrix2d;

// The 2x2 block of mode k, [z; y] ordering.
inline Mat2 mode_block(const linoss::BlockDiag2& b, std::size_t k) {
  Mat2 m;
  m << b.m11[k], b.m12[k], b.m21[k], b.m22[k];
  return m;
}

// Implicit step matrix before inversion: [[1, dt a], [-dt, 1]].
inline Mat2 im_inverse_dense(double a, double dt) {
  Mat2 m;
  m << 1.0, dt * a, -dt, 1.0;
  return m.inverse();
}

// Eigenvalues sorted by imaginary part (negative first).
inline std::vector<std::complex<double>> eig2(const Mat2& m) {
  Eigen::EigenSolver<Mat2> es(m, false);
  std::vector<std::complex<double>> v{es.eigenvalues()(0), es.eigenvalues()(1)};
  std::sort(v.begin(), v.end(), [](auto a, auto b) {
    if (a.imag() != b.imag()) return a.imag() < b.imag();
    return a.real() < b.real();
  });
  return v;
}

// Plain 2x2 recurrence x_n = M x_{n-1} + F_n for one mode.
inline std::vector<Eigen::Vector2d> recur(const Mat2& m, const std::vector<Eigen::Vector2d>& f) {
  std::vector<Eigen::Vector2d> out;
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  for (const auto& fn : f) {
    x = m * x + fn;
    out.push_back(x);
  }
  return out;
}

}  // namespace oracle
