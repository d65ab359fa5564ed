#pragma once

// Oscillator layer parameters and the discrete transition systems of the
// implicit (im), implicit-explicit (imex) and velocity-Verlet (vv) schemes.
//
// Every scheme is stored with the state ordered as x = [z; y] (z velocity,
// y position). The 2m x 2m transition matrix has four diagonal m x m blocks
//
//   [ m11  m12 ] [ z ]
//   [ m21  m22 ] [ y ]
//
// and the forcing of step n is assembled from the drive g_n = B u_n + b as
//
//   F_n = [ z_cur * g_n + z_next * g_{n+1} ;  y_cur * g_n ]
//
// (elementwise products). Only vv uses g_{n+1}.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "linoss/tensor.hpp"

namespace linoss {

enum class Scheme { im, imex, vv };
enum class ParamMode { relu, squared };
enum class InitMode { uniform01, gaussian };

std::string_view to_string(Scheme s);
std::string_view to_string(ParamMode p);
std::string_view to_string(InitMode i);
Scheme parse_scheme(std::string_view s);
ParamMode parse_param_mode(std::string_view s);
InitMode parse_init_mode(std::string_view s);

using Rng = std::mt19937_64;

// Diagonal of the nonnegative state matrix A.
struct EffectiveA {
  Vec diag;
  std::size_t size() const { return diag.size(); }
};

// One oscillator state; z is velocity-like, y position-like.
struct State {
  Vec z;
  Vec y;

  State() = default;
  explicit State(std::size_t m) : z(m, 0.0), y(m, 0.0) {}
  State(Vec z_, Vec y_) : z(std::move(z_)), y(std::move(y_)) {}
  std::size_t size() const { return z.size(); }
  friend bool operator==(const State&, const State&) = default;
};

// 2x2 block matrix whose blocks are diagonal: mode k couples (z_k, y_k) only.
struct BlockDiag2 {
  Vec m11, m12, m21, m22;

  BlockDiag2() = default;
  explicit BlockDiag2(std::size_t m, double diag = 0.0)
      : m11(m, diag), m12(m, 0.0), m21(m, 0.0), m22(m, diag) {}
  static BlockDiag2 identity(std::size_t m) { return BlockDiag2(m, 1.0); }

  std::size_t size() const { return m11.size(); }
  BlockDiag2 transposed() const { return {m11, m21, m12, m22}; }
  friend bool operator==(const BlockDiag2&, const BlockDiag2&) = default;

  BlockDiag2(Vec a, Vec b, Vec c, Vec d)
      : m11(std::move(a)), m12(std::move(b)), m21(std::move(c)), m22(std::move(d)) {}
};

// Coefficients mapping drives g_n, g_{n+1} to the forcing F_n.
struct ForcingCoeffs {
  Vec z_cur, z_next, y_cur;
};

struct DiscreteTransition {
  Scheme scheme = Scheme::im;
  double dt = 1.0;
  BlockDiag2 mat;
  ForcingCoeffs forcing;

  std::size_t modes() const { return mat.size(); }
  bool uses_next_drive() const { return scheme == Scheme::vv; }
};

// Derivatives of the transition blocks and forcing coefficients with respect
// to A_kk, mode by mode.
struct TransitionDerivative {
  BlockDiag2 mat;
  ForcingCoeffs forcing;
};

struct LayerParams {
  Vec a_hat;     // m
  Matrix B;      // m x p
  Matrix C;      // q x m
  Matrix D;      // q x p
  Vec bias_b;    // m
  double dt = 1.0;
  ParamMode param_mode = ParamMode::relu;

  std::size_t state_dim() const { return a_hat.size(); }
  std::size_t input_dim() const { return B.cols(); }
  std::size_t output_dim() const { return C.rows(); }
};

// Throws std::invalid_argument on shape mismatch, dt outside (0, 1] or
// non-finite entries.
void validate(const LayerParams& params);

EffectiveA parameterize_A(std::span<const double> a_hat, ParamMode mode);
// Chain rule through parameterize_A. The ReLU subgradient at 0 is 0.
Vec parameterize_A_backward(std::span<const double> a_hat, ParamMode mode,
                            std::span<const double> cot_a);

DiscreteTransition build_transition(const EffectiveA& a, double dt, Scheme scheme);
TransitionDerivative transition_derivative(const EffectiveA& a, double dt, Scheme scheme);

// Forcing from drives g_n (and g_{n+1} for vv).
State forcing_from_drive(const DiscreteTransition& trans, std::span<const double> g_n,
                         std::span<const double> g_next = {});
// Forcing from raw inputs: drive is B u (no bias).
State assemble_forcing(const DiscreteTransition& trans, const Matrix& B,
                       std::span<const double> u_n,
                       std::optional<std::span<const double>> u_next = std::nullopt);

// x_n = M x_{n-1} + F_n
State step(const DiscreteTransition& trans, const State& x_prev, const State& f);
void apply_block(const BlockDiag2& mat, std::span<const double> z, std::span<const double> y,
                 std::span<double> z_out, std::span<double> y_out);

struct LayerDims {
  std::size_t state = 0;   // m
  std::size_t input = 0;   // p
  std::size_t output = 0;  // q
};

LayerParams init_params(const LayerDims& dims, double dt, InitMode init_mode,
                        ParamMode param_mode, Rng& rng);
LayerParams init_params(const LayerDims& dims, double dt, InitMode init_mode,
                        ParamMode param_mode, std::uint64_t seed);

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for a rows x cols weight (fan_in = cols).
Matrix init_uniform_fan_in(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace linoss
