#include "linoss/lincore.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace linoss {

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::im: return "im";
    case Scheme::imex: return "imex";
    case Scheme::vv: return "vv";
  }
  return "?";
}

std::string_view to_string(ParamMode p) { return p == ParamMode::relu ? "relu" : "squared"; }

std::string_view to_string(InitMode i) {
  return i == InitMode::uniform01 ? "uniform01" : "gaussian";
}

Scheme parse_scheme(std::string_view s) {
  if (s == "im") return Scheme::im;
  if (s == "imex") return Scheme::imex;
  if (s == "vv") return Scheme::vv;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "' (expected im|imex|vv)");
}

ParamMode parse_param_mode(std::string_view s) {
  if (s == "relu") return ParamMode::relu;
  if (s == "squared") return ParamMode::squared;
  throw std::invalid_argument("unknown param_mode '" + std::string(s) +
                              "' (expected relu|squared)");
}

InitMode parse_init_mode(std::string_view s) {
  if (s == "uniform01") return InitMode::uniform01;
  if (s == "gaussian") return InitMode::gaussian;
  throw std::invalid_argument("unknown init_mode '" + std::string(s) +
                              "' (expected uniform01|gaussian)");
}

namespace {

void check_dt(double dt) {
  if (!(dt > 0.0 && dt <= 1.0)) throw std::invalid_argument("dt must lie in (0, 1]");
}

}  // namespace

void validate(const LayerParams& p) {
  const std::size_t m = p.a_hat.size();
  if (m == 0) throw std::invalid_argument("layer: state dimension must be positive");
  if (p.B.rows() != m || p.bias_b.size() != m || p.C.cols() != m)
    throw std::invalid_argument("layer: state dimension mismatch");
  if (p.D.rows() != p.C.rows() || p.D.cols() != p.B.cols())
    throw std::invalid_argument("layer: D shape mismatch");
  check_dt(p.dt);
  if (!all_finite(p.a_hat) || !all_finite(p.B.data()) || !all_finite(p.C.data()) ||
      !all_finite(p.D.data()) || !all_finite(p.bias_b))
    throw std::invalid_argument("non-finite parameter");
}

EffectiveA parameterize_A(std::span<const double> a_hat, ParamMode mode) {
  if (!all_finite(a_hat)) throw std::invalid_argument("non-finite parameter");
  EffectiveA a{Vec(a_hat.size())};
  for (std::size_t k = 0; k < a_hat.size(); ++k)
    a.diag[k] = mode == ParamMode::relu ? std::max(0.0, a_hat[k]) : a_hat[k] * a_hat[k];
  return a;
}

Vec parameterize_A_backward(std::span<const double> a_hat, ParamMode mode,
                            std::span<const double> cot_a) {
  Vec out(a_hat.size());
  for (std::size_t k = 0; k < a_hat.size(); ++k)
    out[k] = mode == ParamMode::relu ? (a_hat[k] > 0.0 ? cot_a[k] : 0.0)
                                     : 2.0 * a_hat[k] * cot_a[k];
  return out;
}

DiscreteTransition build_transition(const EffectiveA& a, double dt, Scheme scheme) {
  check_dt(dt);
  const std::size_t m = a.size();
  for (double v : a.diag)
    if (!(v >= 0.0)) throw std::invalid_argument("stability precondition violated");

  DiscreteTransition t;
  t.scheme = scheme;
  t.dt = dt;
  t.mat = BlockDiag2(m);
  t.forcing = {Vec(m, 0.0), Vec(m, 0.0), Vec(m, 0.0)};
  const double dt2 = dt * dt;
  for (std::size_t k = 0; k < m; ++k) {
    const double ak = a.diag[k];
    switch (scheme) {
      case Scheme::im: {
        // M^-1 via the Schur complement S = (1 + dt^2 A)^-1.
        const double s = 1.0 / (1.0 + dt2 * ak);
        t.mat.m11[k] = s;
        t.mat.m12[k] = -dt * ak * s;
        t.mat.m21[k] = dt * s;
        t.mat.m22[k] = s;
        t.forcing.z_cur[k] = dt * s;
        t.forcing.y_cur[k] = dt2 * s;
        break;
      }
      case Scheme::imex:
        t.mat.m11[k] = 1.0;
        t.mat.m12[k] = -dt * ak;
        t.mat.m21[k] = dt;
        t.mat.m22[k] = 1.0 - dt2 * ak;
        t.forcing.z_cur[k] = dt;
        t.forcing.y_cur[k] = dt2;
        break;
      case Scheme::vv: {
        // Velocity Verlet, permuted from [y; z] to [z; y].
        const double c = 1.0 - 0.5 * dt2 * ak;
        t.mat.m11[k] = c;
        t.mat.m12[k] = -dt * ak * (1.0 - 0.25 * dt2 * ak);
        t.mat.m21[k] = dt;
        t.mat.m22[k] = c;
        t.forcing.z_cur[k] = 0.5 * dt - 0.25 * dt2 * dt * ak;
        t.forcing.z_next[k] = 0.5 * dt;
        t.forcing.y_cur[k] = 0.5 * dt2;
        break;
      }
    }
  }
  return t;
}

TransitionDerivative transition_derivative(const EffectiveA& a, double dt, Scheme scheme) {
  check_dt(dt);
  const std::size_t m = a.size();
  TransitionDerivative d;
  d.mat = BlockDiag2(m);
  d.forcing = {Vec(m, 0.0), Vec(m, 0.0), Vec(m, 0.0)};
  const double dt2 = dt * dt;
  for (std::size_t k = 0; k < m; ++k) {
    const double ak = a.diag[k];
    switch (scheme) {
      case Scheme::im: {
        const double s = 1.0 / (1.0 + dt2 * ak);
        const double ds = -dt2 * s * s;
        d.mat.m11[k] = ds;
        d.mat.m12[k] = -dt * s * s;  // d(-dt a s)/da = -dt s (1 - dt^2 a s) = -dt s^2
        d.mat.m21[k] = dt * ds;
        d.mat.m22[k] = ds;
        d.forcing.z_cur[k] = dt * ds;
        d.forcing.y_cur[k] = dt2 * ds;
        break;
      }
      case Scheme::imex:
        d.mat.m12[k] = -dt;
        d.mat.m22[k] = -dt2;
        break;
      case Scheme::vv:
        d.mat.m11[k] = -0.5 * dt2;
        d.mat.m12[k] = -dt + 0.5 * dt2 * dt * ak;
        d.mat.m22[k] = -0.5 * dt2;
        d.forcing.z_cur[k] = -0.25 * dt2 * dt;
        break;
    }
  }
  return d;
}

State forcing_from_drive(const DiscreteTransition& trans, std::span<const double> g_n,
                         std::span<const double> g_next) {
  const std::size_t m = trans.modes();
  if (g_n.size() != m) throw std::invalid_argument("forcing: drive dimension mismatch");
  if (trans.uses_next_drive() && g_next.size() != m)
    throw std::invalid_argument("forcing: vv scheme requires the next input");
  State f(m);
  const auto& c = trans.forcing;
  for (std::size_t k = 0; k < m; ++k) {
    f.z[k] = c.z_cur[k] * g_n[k];
    if (trans.uses_next_drive()) f.z[k] += c.z_next[k] * g_next[k];
    f.y[k] = c.y_cur[k] * g_n[k];
  }
  return f;
}

State assemble_forcing(const DiscreteTransition& trans, const Matrix& B,
                       std::span<const double> u_n,
                       std::optional<std::span<const double>> u_next) {
  if (trans.uses_next_drive() != u_next.has_value())
    throw std::invalid_argument(trans.uses_next_drive()
                                    ? "forcing: vv scheme requires the next input"
                                    : "forcing: next input given for a one-step scheme");
  if (B.rows() != trans.modes()) throw std::invalid_argument("forcing: B row mismatch");
  Vec g(trans.modes());
  matvec(B, u_n, g);
  if (!u_next) return forcing_from_drive(trans, g);
  Vec g_next(trans.modes());
  matvec(B, *u_next, g_next);
  return forcing_from_drive(trans, g, g_next);
}

void apply_block(const BlockDiag2& mat, std::span<const double> z, std::span<const double> y,
                 std::span<double> z_out, std::span<double> y_out) {
  const std::size_t m = mat.size();
  for (std::size_t k = 0; k < m; ++k) {
    const double zk = z[k], yk = y[k];
    z_out[k] = mat.m11[k] * zk + mat.m12[k] * yk;
    y_out[k] = mat.m21[k] * zk + mat.m22[k] * yk;
  }
}

State step(const DiscreteTransition& trans, const State& x_prev, const State& f) {
  const std::size_t m = trans.modes();
  if (x_prev.z.size() != m || x_prev.y.size() != m || f.z.size() != m || f.y.size() != m)
    throw std::invalid_argument("step: dimension mismatch");
  State x(m);
  apply_block(trans.mat, x_prev.z, x_prev.y, x.z, x.y);
  for (std::size_t k = 0; k < m; ++k) {
    x.z[k] += f.z[k];
    x.y[k] += f.y[k];
  }
  return x;
}

Matrix init_uniform_fan_in(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(rows, cols);
  for (double& v : w.data()) v = dist(rng);
  return w;
}

LayerParams init_params(const LayerDims& dims, double dt, InitMode init_mode,
                        ParamMode param_mode, Rng& rng) {
  if (dims.state == 0 || dims.input == 0 || dims.output == 0)
    throw std::invalid_argument("layer dimensions must be positive");
  check_dt(dt);
  if (init_mode == InitMode::gaussian && param_mode == ParamMode::relu)
    throw std::invalid_argument(
        "incompatible: ReLU would disable ~half the dimensions (gaussian init needs "
        "param_mode=squared)");

  LayerParams p;
  p.dt = dt;
  p.param_mode = param_mode;
  p.a_hat.resize(dims.state);
  if (init_mode == InitMode::uniform01) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (double& v : p.a_hat) v = u01(rng);
  } else {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (double& v : p.a_hat) v = n01(rng);
  }
  p.B = init_uniform_fan_in(dims.state, dims.input, rng);
  p.C = init_uniform_fan_in(dims.output, dims.state, rng);
  p.D = init_uniform_fan_in(dims.output, dims.input, rng);
  p.bias_b.assign(dims.state, 0.0);
  return p;
}

LayerParams init_params(const LayerDims& dims, double dt, InitMode init_mode,
                        ParamMode param_mode, std::uint64_t seed) {
  Rng rng(seed);
  return init_params(dims, dt, init_mode, param_mode, rng);
}

}  // namespace linoss
