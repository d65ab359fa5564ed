#include "linoss/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace linoss {

ModelParams init_model(const ModelDims& dims, double dt, InitMode init_mode,
                       ParamMode param_mode, Rng& rng) {
  if (dims.p_in == 0 || dims.hidden == 0 || dims.state == 0 || dims.out == 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (dims.n_blocks == 0) throw std::invalid_argument("model needs at least one block");
  ModelParams p;
  p.enc_w = init_uniform_fan_in(dims.hidden, dims.p_in, rng);
  p.enc_b.assign(dims.hidden, 0.0);
  for (std::size_t l = 0; l < dims.n_blocks; ++l) {
    BlockParams b;
    b.layer = init_params({dims.state, dims.hidden, dims.hidden}, dt, init_mode, param_mode, rng);
    b.glu_w1 = init_uniform_fan_in(dims.hidden, dims.hidden, rng);
    b.glu_w2 = init_uniform_fan_in(dims.hidden, dims.hidden, rng);
    p.blocks.push_back(std::move(b));
  }
  p.dec_w = init_uniform_fan_in(dims.out, dims.hidden, rng);
  p.dec_b.assign(dims.out, 0.0);
  return p;
}

void validate(const ModelParams& p) {
  const std::size_t h = p.hidden_dim();
  if (h == 0 || p.input_dim() == 0 || p.output_dim() == 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (p.blocks.empty()) throw std::invalid_argument("model needs at least one block");
  if (p.enc_b.size() != h || p.dec_w.cols() != h || p.dec_b.size() != p.output_dim())
    throw std::invalid_argument("model: encoder/decoder shape mismatch");
  for (const auto& b : p.blocks) {
    validate(b.layer);
    if (b.layer.input_dim() != h || b.layer.output_dim() != h)
      throw std::invalid_argument("block width must equal the hidden dimension");
    if (b.glu_w1.rows() != h || b.glu_w1.cols() != h || b.glu_w2.rows() != h ||
        b.glu_w2.cols() != h)
      throw std::invalid_argument("block: GLU shape mismatch");
  }
  for (const auto& a : named_arrays(p))
    if (!all_finite(a.values)) throw std::invalid_argument("non-finite parameter: " + a.name);
}

namespace {

template <class Ref, class Params>
std::vector<Ref> collect_arrays(Params& p) {
  std::vector<Ref> out;
  auto mat = [&](std::string name, auto& m) {
    out.push_back({std::move(name), {m.data().data(), m.size()}, {m.rows(), m.cols()}});
  };
  auto vec = [&](std::string name, auto& v) {
    out.push_back({std::move(name), {v.data(), v.size()}, {v.size()}});
  };
  mat("enc_w", p.enc_w);
  vec("enc_b", p.enc_b);
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    auto& b = p.blocks[l];
    const std::string pre = "block" + std::to_string(l) + ".";
    vec(pre + "a_hat", b.layer.a_hat);
    mat(pre + "B", b.layer.B);
    mat(pre + "C", b.layer.C);
    mat(pre + "D", b.layer.D);
    vec(pre + "bias_b", b.layer.bias_b);
    mat(pre + "glu_w1", b.glu_w1);
    mat(pre + "glu_w2", b.glu_w2);
  }
  mat("dec_w", p.dec_w);
  vec("dec_b", p.dec_b);
  return out;
}

}  // namespace

std::vector<ArrayRef> named_arrays(ModelParams& params) {
  return collect_arrays<ArrayRef>(params);
}
std::vector<ConstArrayRef> named_arrays(const ModelParams& params) {
  return collect_arrays<ConstArrayRef>(params);
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for (auto& a : named_arrays(z)) std::fill(a.values.begin(), a.values.end(), 0.0);
  return z;
}

StateSeq forcings_from_drives(const DiscreteTransition& trans, const Matrix& drives) {
  const std::size_t n = drives.rows(), m = trans.modes();
  if (drives.cols() != m) throw std::invalid_argument("forcing: drive dimension mismatch");
  StateSeq f(n, m);
  const auto& c = trans.forcing;
  const bool next = trans.uses_next_drive();
  for (std::size_t i = 0; i < n; ++i) {
    auto g = drives.row(i);
    auto gn = drives.row(i + 1 < n ? i + 1 : i);
    for (std::size_t k = 0; k < m; ++k) {
      f.z(i, k) = c.z_cur[k] * g[k] + (next ? c.z_next[k] * gn[k] : 0.0);
      f.y(i, k) = c.y_cur[k] * g[k];
    }
  }
  return f;
}

namespace {

Matrix layer_readout(const LayerParams& p, const StateSeq& states, const Matrix& inputs) {
  Matrix out = apply_rows(p.C, states.y);
  Matrix du = apply_rows(p.D, inputs);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += du.data()[i];
  return out;
}

void check_inputs(const Matrix& inputs, std::size_t width) {
  if (inputs.rows() == 0) throw std::invalid_argument("input sequence is empty");
  if (inputs.cols() != width) throw std::invalid_argument("input width mismatch");
}

}  // namespace

LayerOutput layer_forward(const LayerParams& params, Scheme scheme, const Matrix& inputs,
                          const ScanOptions& opts) {
  check_inputs(inputs, params.input_dim());
  const EffectiveA a = parameterize_A(params.a_hat, params.param_mode);
  const DiscreteTransition trans = build_transition(a, params.dt, scheme);
  const Matrix drives = apply_rows(params.B, params.bias_b, inputs);
  LayerOutput out;
  out.states = solve_recurrence(trans, forcings_from_drives(trans, drives), opts);
  out.readout = layer_readout(params, out.states, inputs);
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  return cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec gelu(std::span<const double> x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

Vec glu(const Matrix& w1, const Matrix& w2, std::span<const double> x) {
  Vec a(w1.rows()), b(w2.rows());
  matvec(w1, x, a);
  matvec(w2, x, b);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = sigmoid(a[i]) * b[i];
  return a;
}

BlockTape block_forward_tape(const BlockParams& block, Scheme scheme, const Matrix& seq_in,
                             const ScanOptions& opts) {
  const LayerParams& lp = block.layer;
  if (lp.input_dim() != lp.output_dim() || seq_in.cols() != lp.input_dim())
    throw std::invalid_argument("block: width mismatch");
  check_inputs(seq_in, lp.input_dim());
  BlockTape t;
  t.input = seq_in;
  t.a = parameterize_A(lp.a_hat, lp.param_mode);
  t.trans = build_transition(t.a, lp.dt, scheme);
  t.drives = apply_rows(lp.B, lp.bias_b, seq_in);
  t.states = solve_recurrence(t.trans, forcings_from_drives(t.trans, t.drives), opts);
  t.readout = layer_readout(lp, t.states, seq_in);
  t.act = t.readout;
  for (double& v : t.act.data()) v = gelu(v);
  t.gate = apply_rows(block.glu_w1, t.act);
  for (double& v : t.gate.data()) v = sigmoid(v);
  t.lin = apply_rows(block.glu_w2, t.act);
  t.output = seq_in;
  for (std::size_t i = 0; i < t.output.size(); ++i)
    t.output.data()[i] += t.gate.data()[i] * t.lin.data()[i];
  return t;
}

Matrix block_forward(const BlockParams& block, Scheme scheme, const Matrix& seq_in,
                     const ScanOptions& opts) {
  return block_forward_tape(block, scheme, seq_in, opts).output;
}

ModelTape model_forward_tape(const ModelParams& params, Scheme scheme, const Matrix& inputs,
                             const ScanOptions& opts) {
  check_inputs(inputs, params.input_dim());
  ModelTape tape;
  tape.input = inputs;
  tape.encoded = apply_rows(params.enc_w, params.enc_b, inputs);
  const Matrix* cur = &tape.encoded;
  tape.blocks.reserve(params.blocks.size());
  for (const auto& b : params.blocks) {
    tape.blocks.push_back(block_forward_tape(b, scheme, *cur, opts));
    cur = &tape.blocks.back().output;
  }
  tape.output = apply_rows(params.dec_w, params.dec_b, *cur);
  return tape;
}

Matrix model_forward(const ModelParams& params, Scheme scheme, const Matrix& inputs,
                     const ScanOptions& opts) {
  check_inputs(inputs, params.input_dim());
  Matrix cur = apply_rows(params.enc_w, params.enc_b, inputs);
  for (const auto& b : params.blocks) cur = block_forward(b, scheme, cur, opts);
  return apply_rows(params.dec_w, params.dec_b, cur);
}

Vec head_classify(const Matrix& outputs, std::size_t length) {
  if (length == 0) length = outputs.rows();
  if (length == 0 || length > outputs.rows())
    throw std::invalid_argument("head: invalid sequence length");
  auto r = outputs.row(length - 1);
  return {r.begin(), r.end()};
}

Matrix head_forecast(const Matrix& outputs, std::size_t l1, std::size_t l2) {
  if (outputs.rows() != l1 + l2)
    throw std::invalid_argument("forecast head: sequence length " +
                                std::to_string(outputs.rows()) + " != L1 + L2 = " +
                                std::to_string(l1 + l2));
  Matrix out(l2, outputs.cols());
  for (std::size_t i = 0; i < l2; ++i) {
    auto src = outputs.row(l1 + i);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix universality_block_forward(const UniversalityBlock& ub, const Matrix& inputs,
                                  double dt_fine) {
  check_inputs(inputs, ub.B.cols());
  const DiscreteTransition trans = build_transition(ub.a, dt_fine, Scheme::imex);
  const Matrix drives = apply_rows(ub.B, ub.bias_b, inputs);
  const StateSeq states = solve_recurrence(trans, forcings_from_drives(trans, drives));
  Matrix hidden = apply_rows(ub.w_tilde, ub.b_tilde, states.y);
  for (double& v : hidden.data())
    v = ub.activation == Activation::relu ? std::max(0.0, v) : std::tanh(v);
  return apply_rows(ub.W, hidden);
}

UniversalityBlock make_sine_transform_block(std::span<const double> freqs, std::size_t p) {
  if (freqs.empty() || p == 0) throw std::invalid_argument("sine transform: empty block");
  const std::size_t m = freqs.size() * p + 1;
  UniversalityBlock ub;
  ub.activation = Activation::relu;
  ub.a.diag.assign(m, 0.0);
  ub.B = Matrix(m, p);
  ub.bias_b.assign(m, 0.0);
  Vec scale(m, 1.0);
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (!(freqs[i] > 0.0)) throw std::invalid_argument("sine transform: frequency must be > 0");
    for (std::size_t c = 0; c < p; ++c) {
      const std::size_t k = i * p + c;
      ub.a.diag[k] = freqs[i] * freqs[i];  // y'' = -freq^2 y + u_c
      ub.B(k, c) = 1.0;
      scale[k] = freqs[i];  // L_t u(freq) = freq * y
    }
  }
  ub.bias_b[m - 1] = 0.5;  // y'' = 1/2 gives y = t^2 / 4
  // Identity through ReLU: v = relu(v) - relu(-v).
  ub.w_tilde = Matrix(2 * m, m);
  ub.b_tilde.assign(2 * m, 0.0);
  ub.W = Matrix(m, 2 * m);
  for (std::size_t k = 0; k < m; ++k) {
    ub.w_tilde(k, k) = scale[k];
    ub.w_tilde(m + k, k) = -scale[k];
    ub.W(k, k) = 1.0;
    ub.W(k, m + k) = -1.0;
  }
  return ub;
}

}  // namespace linoss
