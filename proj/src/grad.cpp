#include "linoss/grad.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace linoss {

namespace {

StateSeq reversed(const StateSeq& s) {
  const std::size_t n = s.length(), m = s.modes();
  StateSeq r(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = s.z.row(n - 1 - i), y = s.y.row(n - 1 - i);
    std::copy(z.begin(), z.end(), r.z.row(i).begin());
    std::copy(y.begin(), y.end(), r.y.row(i).begin());
  }
  return r;
}

}  // namespace

RecurrenceAdjoint adjoint_recurrence(const BlockDiag2& mat, const StateSeq& states,
                                     const StateSeq& cot_states, const ScanOptions& opts) {
  const std::size_t n = states.length(), m = mat.size();
  if (cot_states.length() != n || cot_states.modes() != m || states.modes() != m)
    throw std::invalid_argument("adjoint: length mismatch");
  RecurrenceAdjoint adj;
  adj.cot_forcings = reversed(solve_recurrence(mat.transposed(), reversed(cot_states), opts));
  adj.cot_mat = BlockDiag2(m);
  auto& c = adj.cot_mat;
  for (std::size_t i = 1; i < n; ++i) {
    auto lz = adj.cot_forcings.z.row(i), ly = adj.cot_forcings.y.row(i);
    auto zp = states.z.row(i - 1), yp = states.y.row(i - 1);
    for (std::size_t k = 0; k < m; ++k) {
      c.m11[k] += lz[k] * zp[k];
      c.m12[k] += lz[k] * yp[k];
      c.m21[k] += ly[k] * zp[k];
      c.m22[k] += ly[k] * yp[k];
    }
  }
  return adj;
}

StateSeq reconstruct_states_imex(const DiscreteTransition& trans, const State& final_state,
                                 const StateSeq& forcings) {
  if (trans.scheme != Scheme::imex)
    throw std::invalid_argument("state reversal is only available for the imex scheme");
  const std::size_t n = forcings.length(), m = trans.modes();
  if (n == 0 || final_state.size() != m) throw std::invalid_argument("reversal: size mismatch");
  const auto& M = trans.mat;
  StateSeq x(n, m);
  std::copy(final_state.z.begin(), final_state.z.end(), x.z.row(n - 1).begin());
  std::copy(final_state.y.begin(), final_state.y.end(), x.y.row(n - 1).begin());
  for (std::size_t i = n - 1; i >= 1; --i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double dz = x.z(i, k) - forcings.z(i, k);
      const double dy = x.y(i, k) - forcings.y(i, k);
      x.z(i - 1, k) = M.m22[k] * dz - M.m12[k] * dy;
      x.y(i - 1, k) = -M.m21[k] * dz + M.m11[k] * dy;
    }
  }
  return x;
}

Matrix block_backward(const BlockParams& block, const BlockTape& t, const Matrix& d_out,
                      BlockParams& g, const GradOptions& opts) {
  const LayerParams& lp = block.layer;
  const std::size_t n = t.input.rows(), h = t.input.cols(), m = lp.state_dim();
  Matrix d_in = d_out;  // skip connection

  // GLU: out = sigmoid(W1 a) * (W2 a)
  Matrix d_pre1(n, h), d_lin(n, h);
  for (std::size_t i = 0; i < d_out.size(); ++i) {
    const double s = t.gate.data()[i], d = d_out.data()[i];
    d_pre1.data()[i] = d * t.lin.data()[i] * s * (1.0 - s);
    d_lin.data()[i] = d * s;
  }
  Matrix d_act(n, h);
  apply_rows_backward(block.glu_w1, t.act, d_pre1, g.glu_w1, &d_act);
  apply_rows_backward(block.glu_w2, t.act, d_lin, g.glu_w2, &d_act);

  Matrix d_read = d_act;
  for (std::size_t i = 0; i < d_read.size(); ++i)
    d_read.data()[i] *= gelu_grad(t.readout.data()[i]);

  // Readout C y + D u
  StateSeq cot_states(n, m);
  apply_rows_backward(lp.C, t.states.y, d_read, g.layer.C, &cot_states.y);
  apply_rows_backward(lp.D, t.input, d_read, g.layer.D, &d_in);

  const StateSeq* states = &t.states;
  StateSeq rebuilt;
  if (opts.memory == MemoryMode::reversal) {
    const StateSeq f = forcings_from_drives(t.trans, t.drives);
    rebuilt = reconstruct_states_imex(t.trans, t.states.at(n - 1), f);
    states = &rebuilt;
  }
  const RecurrenceAdjoint adj = adjoint_recurrence(t.trans.mat, *states, cot_states, opts.scan);
  const auto& lam = adj.cot_forcings;
  const auto& fc = t.trans.forcing;
  const bool next = t.trans.uses_next_drive();

  Matrix d_drive(n, m);
  Vec c_zcur(m, 0.0), c_znext(m, 0.0), c_ycur(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto gd = t.drives.row(i);
    auto gnext = t.drives.row(i + 1 < n ? i + 1 : i);
    auto dd = d_drive.row(i);
    for (std::size_t k = 0; k < m; ++k) {
      const double lz = lam.z(i, k), ly = lam.y(i, k);
      dd[k] += fc.z_cur[k] * lz + fc.y_cur[k] * ly;
      c_zcur[k] += lz * gd[k];
      c_ycur[k] += ly * gd[k];
      if (next) {
        c_znext[k] += lz * gnext[k];
        d_drive(i + 1 < n ? i + 1 : i, k) += fc.z_next[k] * lz;
      }
    }
  }

  const TransitionDerivative dT = transition_derivative(t.a, lp.dt, t.trans.scheme);
  Vec d_a(m);
  for (std::size_t k = 0; k < m; ++k) {
    d_a[k] = adj.cot_mat.m11[k] * dT.mat.m11[k] + adj.cot_mat.m12[k] * dT.mat.m12[k] +
             adj.cot_mat.m21[k] * dT.mat.m21[k] + adj.cot_mat.m22[k] * dT.mat.m22[k] +
             c_zcur[k] * dT.forcing.z_cur[k] + c_znext[k] * dT.forcing.z_next[k] +
             c_ycur[k] * dT.forcing.y_cur[k];
  }
  const Vec d_ahat = parameterize_A_backward(lp.a_hat, lp.param_mode, d_a);
  for (std::size_t k = 0; k < m; ++k) g.layer.a_hat[k] += d_ahat[k];

  // Drive B u + b
  apply_rows_backward(lp.B, t.input, d_drive, g.layer.B, &d_in);
  for (std::size_t i = 0; i < n; ++i) {
    auto dd = d_drive.row(i);
    for (std::size_t k = 0; k < m; ++k) g.layer.bias_b[k] += dd[k];
  }
  return d_in;
}

Gradients model_backward(const ModelParams& params, const ModelTape& tape,
                         const Matrix& d_output, const GradOptions& opts) {
  if (d_output.rows() != tape.output.rows() || d_output.cols() != tape.output.cols())
    throw std::invalid_argument("model_backward: cotangent shape mismatch");
  if (!all_finite(d_output.data()))
    throw std::invalid_argument("model_backward: non-finite loss cotangent");
  Gradients g = zeros_like(params);
  const Matrix& last = tape.blocks.empty() ? tape.encoded : tape.blocks.back().output;
  Matrix d_cur(last.rows(), last.cols());
  apply_rows_backward(params.dec_w, last, d_output, g.dec_w, &d_cur);
  for (std::size_t i = 0; i < d_output.rows(); ++i) {
    auto r = d_output.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) g.dec_b[j] += r[j];
  }
  for (std::size_t l = params.blocks.size(); l-- > 0;)
    d_cur = block_backward(params.blocks[l], tape.blocks[l], d_cur, g.blocks[l], opts);
  apply_rows_backward(params.enc_w, tape.input, d_cur, g.enc_w, nullptr);
  for (std::size_t i = 0; i < d_cur.rows(); ++i) {
    auto r = d_cur.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) g.enc_b[j] += r[j];
  }
  return g;
}

void accumulate(Gradients& dst, const Gradients& src, double scale) {
  auto d = named_arrays(dst);
  auto s = named_arrays(src);
  if (d.size() != s.size()) throw std::invalid_argument("accumulate: layout mismatch");
  for (std::size_t a = 0; a < d.size(); ++a) {
    if (d[a].values.size() != s[a].values.size())
      throw std::invalid_argument("accumulate: shape mismatch in " + d[a].name);
    for (std::size_t i = 0; i < d[a].values.size(); ++i) d[a].values[i] += scale * s[a].values[i];
  }
}

bool FdReport::passed() const {
  return std::all_of(arrays.begin(), arrays.end(), [](const auto& a) { return a.passed; });
}

std::string FdReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(18) << "array" << std::right << std::setw(8) << "coords"
     << std::setw(14) << "max_abs_err" << std::setw(14) << "max_rel_err" << "  status\n";
  for (const auto& a : arrays) {
    os << std::left << std::setw(18) << a.name << std::right << std::setw(8) << a.checked
       << std::setw(14) << std::scientific << std::setprecision(3) << a.max_abs_err
       << std::setw(14) << a.max_rel_err << "  " << (a.passed ? "ok" : "FAIL") << '\n'
       << std::defaultfloat;
  }
  return os.str();
}

FdReport finite_diff_check(const std::function<double()>& loss_fn,
                           const std::vector<ArrayRef>& params,
                           const std::vector<ConstArrayRef>& grads, const FdOptions& opts) {
  if (params.size() != grads.size()) throw std::invalid_argument("fd check: layout mismatch");
  FdReport report;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t a = 0; a < params.size(); ++a) {
    const auto& p = params[a];
    const auto& g = grads[a];
    if (p.values.size() != g.values.size())
      throw std::invalid_argument("fd check: shape mismatch in " + p.name);
    std::vector<std::size_t> idx(p.values.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > opts.max_coords) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_coords);
      std::sort(idx.begin(), idx.end());
    }
    FdArrayReport r{p.name};
    for (std::size_t i : idx) {
      if (opts.skip && opts.skip(p.name, i)) continue;
      const double orig = p.values[i];
      p.values[i] = orig + opts.step;
      const double lp = loss_fn();
      p.values[i] = orig - opts.step;
      const double lm = loss_fn();
      p.values[i] = orig;
      const double fd = (lp - lm) / (2.0 * opts.step);
      const double an = g.values[i];
      const double err = std::abs(fd - an);
      const double scale = std::max(std::abs(fd), std::abs(an));
      r.max_abs_err = std::max(r.max_abs_err, err);
      if (scale > 0.0) r.max_rel_err = std::max(r.max_rel_err, err / scale);
      if (err > opts.rel_tol * scale + opts.abs_floor) r.passed = false;
      ++r.checked;
    }
    report.arrays.push_back(r);
  }
  return report;
}

std::function<bool(const std::string&, std::size_t)> relu_kink_skip(const ModelParams& params,
                                                                    double margin) {
  std::vector<std::pair<std::string, Vec>> kinks;
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const auto& lp = params.blocks[l].layer;
    if (lp.param_mode == ParamMode::relu)
      kinks.emplace_back("block" + std::to_string(l) + ".a_hat", lp.a_hat);
  }
  return [kinks, margin](const std::string& name, std::size_t i) {
    for (const auto& [n, v] : kinks)
      if (n == name && std::abs(v[i]) < margin) return true;
    return false;
  };
}

}  // namespace linoss
