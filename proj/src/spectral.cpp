#include "linoss/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace linoss {

namespace {

void check_nonnegative(const EffectiveA& a) {
  for (double v : a.diag)
    if (!(v >= 0.0)) throw std::invalid_argument("stability precondition violated");
}

std::pair<Complex, Complex> block_eigs(double a, double b, double c, double d) {
  const double half_tr = 0.5 * (a + d);
  const double disc = 0.25 * (a - d) * (a - d) + b * c;
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    return {Complex(half_tr - r, 0.0), Complex(half_tr + r, 0.0)};
  }
  const double r = std::sqrt(-disc);
  return {Complex(half_tr, -r), Complex(half_tr, r)};
}

}  // namespace

std::vector<Complex> eigvals_blocks(const BlockDiag2& mat) {
  const std::size_t m = mat.size();
  std::vector<Complex> out(2 * m);
  for (std::size_t k = 0; k < m; ++k) {
    auto [lo, hi] = block_eigs(mat.m11[k], mat.m12[k], mat.m21[k], mat.m22[k]);
    out[k] = lo;
    out[k + m] = hi;
  }
  return out;
}

std::vector<Complex> eigvals_im(const EffectiveA& a, double dt) {
  check_nonnegative(a);
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const std::size_t m = a.size();
  std::vector<Complex> out(2 * m);
  for (std::size_t k = 0; k < m; ++k) {
    const double s = 1.0 / (1.0 + dt * dt * a.diag[k]);
    const double im = dt * s * std::sqrt(a.diag[k]);
    out[k] = Complex(s, -im);
    out[k + m] = Complex(s, im);
  }
  return out;
}

std::vector<Complex> eigvals_imex(const EffectiveA& a, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const std::size_t m = a.size();
  std::vector<Complex> out(2 * m);
  for (std::size_t k = 0; k < m; ++k) {
    const double w = dt * dt * a.diag[k];
    if (!(a.diag[k] > 0.0) || w > 4.0)
      throw std::invalid_argument("imex spectrum hypothesis violated at mode " +
                                  std::to_string(k) + " (need A > 0 and dt <= 2/sqrt(A))");
    const double re = 0.5 * (2.0 - w);
    const double im = 0.5 * std::sqrt(w * (4.0 - w));
    out[k] = Complex(re, -im);
    out[k + m] = Complex(re, im);
  }
  return out;
}

std::vector<Complex> eigvals_vv(const EffectiveA& a, double dt) {
  return eigvals_blocks(build_transition(a, dt, Scheme::vv).mat);
}

SpectrumReport spectrum(const EffectiveA& a, double dt, Scheme scheme) {
  SpectrumReport r;
  r.scheme = scheme;
  r.dt = dt;
  switch (scheme) {
    case Scheme::im: r.eigenvalues = eigvals_im(a, dt); break;
    case Scheme::imex: r.eigenvalues = eigvals_imex(a, dt); break;
    case Scheme::vv: r.eigenvalues = eigvals_vv(a, dt); break;
  }
  if (!r.eigenvalues.empty()) {
    r.max_modulus = 0.0;
    r.min_modulus = std::abs(r.eigenvalues[0]);
    for (const auto& l : r.eigenvalues) {
      r.max_modulus = std::max(r.max_modulus, std::abs(l));
      r.min_modulus = std::min(r.min_modulus, std::abs(l));
    }
  }
  return r;
}

double moment_im(std::uint64_t n, double dt, double a_max) {
  if (n == 0) return 1.0;
  if (!(dt > 0.0 && a_max > 0.0)) throw std::invalid_argument("moment: dt and A_max must be > 0");
  const double c = dt * dt * a_max;
  const double e = 1.0 - 0.5 * static_cast<double>(n);
  if (std::abs(e) < 1e-12) return std::log1p(c) / c;
  return (std::pow(c + 1.0, e) - 1.0) / (c * e);
}

MomentEstimate moment_mc(std::uint64_t n, double dt, double a_max, std::uint64_t samples,
                         std::uint64_t seed) {
  if (samples < 2) throw std::invalid_argument("moment_mc: need at least 2 samples");
  constexpr std::uint64_t kStreams = 16;
  const std::uint64_t pairs = samples / 2;
  const double half_n = 0.5 * static_cast<double>(n);
  auto mag = [&](double a) { return std::pow(1.0 + dt * dt * a, -half_n); };
  double sum = 0.0, sum_sq = 0.0;
  for (std::uint64_t s = 0; s < kStreams; ++s) {
    std::mt19937_64 rng(seed * kStreams + s);
    std::uniform_real_distribution<double> dist(0.0, a_max);
    const std::uint64_t count = pairs / kStreams + (s < pairs % kStreams ? 1 : 0);
    double ls = 0.0, lsq = 0.0;
    for (std::uint64_t i = 0; i < count; ++i) {
      const double a = dist(rng);
      const double v = 0.5 * (mag(a) + mag(a_max - a));
      ls += v;
      lsq += v * v;
    }
    sum += ls;
    sum_sq += lsq;
  }
  const double np = static_cast<double>(pairs);
  MomentEstimate est;
  est.value = sum / np;
  const double var = std::max(0.0, sum_sq / np - est.value * est.value);
  est.std_error = std::sqrt(var / np);
  return est;
}

double hamiltonian(std::span<const double> y, std::span<const double> z, const EffectiveA& a,
                   const Matrix& B, std::span<const double> u) {
  const std::size_t m = a.size();
  if (y.size() != m || z.size() != m) throw std::invalid_argument("hamiltonian: size mismatch");
  Vec bu(m, 0.0);
  if (!u.empty()) matvec(B, u, bu);
  double h = 0.0;
  for (std::size_t k = 0; k < m; ++k)
    h += a.diag[k] * y[k] * y[k] + z[k] * z[k] - 2.0 * bu[k] * y[k];
  return 0.5 * h;
}

double imex_modified_energy(std::span<const double> y, std::span<const double> z,
                            const EffectiveA& a, double dt) {
  double h = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    h += z[k] * z[k] - dt * a.diag[k] * z[k] * y[k] + a.diag[k] * y[k] * y[k];
  return 0.5 * h;
}

std::vector<Complex> modal_coordinates(const BlockDiag2& mat, const State& x) {
  const std::size_t m = mat.size();
  const auto eig = eigvals_blocks(mat);
  std::vector<Complex> w(2 * m);
  for (std::size_t k = 0; k < m; ++k) {
    const double a = mat.m11[k], b = mat.m12[k], c = mat.m21[k], d = mat.m22[k];
    const Complex l1 = eig[k], l2 = eig[k + m];
    // Eigenvectors v = (b, l - a) or (l - d, c).
    Complex v1z, v1y, v2z, v2y;
    if (std::abs(b) >= std::abs(c)) {
      v1z = b, v1y = l1 - a, v2z = b, v2y = l2 - a;
    } else {
      v1z = l1 - d, v1y = c, v2z = l2 - d, v2y = c;
    }
    const Complex det = v1z * v2y - v2z * v1y;
    if (std::abs(det) == 0.0)
      throw std::invalid_argument("modal_coordinates: mode " + std::to_string(k) +
                                  " is not diagonalizable");
    const double xz = x.z[k], xy = x.y[k];
    w[k] = (v2y * xz - v2z * xy) / det;
    w[k + m] = (-v1y * xz + v1z * xy) / det;
  }
  return w;
}

double modal_norm(const BlockDiag2& mat, const State& x) {
  double s = 0.0;
  for (const auto& c : modal_coordinates(mat, x)) s += std::norm(c);
  return std::sqrt(s);
}

std::string format_spectrum(const SpectrumReport& r) {
  std::ostringstream os;
  os << "scheme " << to_string(r.scheme) << "  dt " << r.dt << "  modes "
     << r.eigenvalues.size() / 2 << '\n';
  os << std::setprecision(15) << "max |lambda| " << r.max_modulus << "\nmin |lambda| "
     << r.min_modulus << '\n';
  os << std::setw(6) << "j" << std::setw(24) << "re" << std::setw(24) << "im" << std::setw(24)
     << "modulus" << '\n';
  for (std::size_t j = 0; j < r.eigenvalues.size(); ++j) {
    const auto& l = r.eigenvalues[j];
    os << std::setw(6) << j << std::setw(24) << l.real() << std::setw(24) << l.imag()
       << std::setw(24) << std::abs(l) << '\n';
  }
  return os.str();
}

std::string spectrum_csv(const SpectrumReport& r) {
  std::ostringstream os;
  os << "j,re,im,modulus\n" << std::setprecision(17);
  for (std::size_t j = 0; j < r.eigenvalues.size(); ++j) {
    const auto& l = r.eigenvalues[j];
    os << j << ',' << l.real() << ',' << l.imag() << ',' << std::abs(l) << '\n';
  }
  return os.str();
}

}  // namespace linoss
