#pragma once

// Eigenspectra of the discrete transitions (per decoupled 2x2 mode), moments
// of the IM eigenvalue magnitudes under uniform A, and energy functionals.

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "linoss/lincore.hpp"

namespace linoss {

using Complex = std::complex<double>;

// Eigenvalues of a block-diagonal transition, index k and k + m belonging to
// mode k; the first of each pair has the negative imaginary part.
std::vector<Complex> eigvals_blocks(const BlockDiag2& mat);

// lambda = S -/+ i dt S sqrt(A), S = 1 / (1 + dt^2 A).
std::vector<Complex> eigvals_im(const EffectiveA& a, double dt);
// lambda = (2 - dt^2 A)/2 -/+ (i/2) sqrt(dt^2 A (4 - dt^2 A)); needs A > 0 and
// dt^2 A <= 4 for every mode.
std::vector<Complex> eigvals_imex(const EffectiveA& a, double dt);
// No closed form: computed from the assembled 2x2 blocks.
std::vector<Complex> eigvals_vv(const EffectiveA& a, double dt);

struct SpectrumReport {
  std::vector<Complex> eigenvalues;
  double max_modulus = 0.0;
  double min_modulus = 0.0;
  Scheme scheme = Scheme::im;
  double dt = 1.0;
};

SpectrumReport spectrum(const EffectiveA& a, double dt, Scheme scheme);

// E(|lambda|^N) for A ~ U([0, a_max]) under the im scheme. N = 2 is the
// removable singularity ln(1 + dt^2 a_max) / (dt^2 a_max).
double moment_im(std::uint64_t n, double dt, double a_max);

struct MomentEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Monte Carlo estimate of E(|lambda|^N) with |lambda| = sqrt(S). Draws come
// in antithetic pairs (a, a_max - a); `samples` counts single draws. Work is
// split into fixed seed substreams and recombined in order.
MomentEstimate moment_mc(std::uint64_t n, double dt, double a_max, std::uint64_t samples,
                         std::uint64_t seed);

// H = 1/2 sum_k A_k y_k^2 + z_k^2 - 2 (B u)_k y_k
double hamiltonian(std::span<const double> y, std::span<const double> z, const EffectiveA& a,
                   const Matrix& B, std::span<const double> u);

// Quadratic invariant of the free imex map:
// 1/2 sum_k z_k^2 - dt A_k z_k y_k + A_k y_k^2.
double imex_modified_energy(std::span<const double> y, std::span<const double> z,
                            const EffectiveA& a, double dt);

// Coordinates of x = [z; y] in the eigenbasis of each 2x2 mode, ordered like
// eigvals_blocks. Requires diagonalizable modes.
std::vector<Complex> modal_coordinates(const BlockDiag2& mat, const State& x);
double modal_norm(const BlockDiag2& mat, const State& x);

std::string format_spectrum(const SpectrumReport& r);
std::string spectrum_csv(const SpectrumReport& r);

}  // namespace linoss
