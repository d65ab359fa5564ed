#pragma once

// LinOSS layer, GELU/GLU block with skip connection, the multi-block model
// (encode -> blocks -> decode), task heads, and the single-block readout used
// for the universality construction.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "linoss/lincore.hpp"
#include "linoss/scan.hpp"
#include "linoss/tensor.hpp"

namespace linoss {

struct BlockParams {
  LayerParams layer;  // p = q = h
  Matrix glu_w1;      // h x h
  Matrix glu_w2;      // h x h
};

struct ModelParams {
  Matrix enc_w;  // h x p_in
  Vec enc_b;     // h
  std::vector<BlockParams> blocks;
  Matrix dec_w;  // out x h
  Vec dec_b;     // out

  std::size_t input_dim() const { return enc_w.cols(); }
  std::size_t hidden_dim() const { return enc_w.rows(); }
  std::size_t output_dim() const { return dec_w.rows(); }
};

struct ModelDims {
  std::size_t p_in = 0;
  std::size_t hidden = 0;
  std::size_t state = 0;
  std::size_t out = 0;
  std::size_t n_blocks = 1;
};

ModelParams init_model(const ModelDims& dims, double dt, InitMode init_mode,
                       ParamMode param_mode, Rng& rng);
void validate(const ModelParams& params);

// A named view of one parameter array. Order is fixed: enc_w, enc_b, then per
// block l "block<l>.{a_hat,B,C,D,bias_b,glu_w1,glu_w2}", then dec_w, dec_b.
struct ArrayRef {
  std::string name;
  std::span<double> values;
  std::vector<std::size_t> shape;
};
struct ConstArrayRef {
  std::string name;
  std::span<const double> values;
  std::vector<std::size_t> shape;
};
std::vector<ArrayRef> named_arrays(ModelParams& params);
std::vector<ConstArrayRef> named_arrays(const ModelParams& params);

// Same shapes, all zeros.
ModelParams zeros_like(const ModelParams& params);

// ---- layer ----

// Forcings for a whole sequence from drives G (N x m). For vv the drive after
// the last step is held at G[N-1]; it only reaches z_N, which the readout
// never sees.
StateSeq forcings_from_drives(const DiscreteTransition& trans, const Matrix& drives);

struct LayerOutput {
  StateSeq states;
  Matrix readout;  // N x q
};

LayerOutput layer_forward(const LayerParams& params, Scheme scheme, const Matrix& inputs,
                          const ScanOptions& opts = {});

// ---- nonlinearities ----

double gelu(double x);       // x * Phi(x), erf form
double gelu_grad(double x);  // Phi(x) + x phi(x)
double sigmoid(double x);
Vec gelu(std::span<const double> x);
Vec glu(const Matrix& w1, const Matrix& w2, std::span<const double> x);

// ---- blocks and model ----

// Intermediates of one block, kept for the backward pass.
struct BlockTape {
  Matrix input;  // u^{l-1}, N x h
  EffectiveA a;
  DiscreteTransition trans;
  Matrix drives;  // B u + b, N x m
  StateSeq states;
  Matrix readout;  // C y + D u
  Matrix act;      // gelu(readout)
  Matrix gate;     // sigmoid(W1 act)
  Matrix lin;      // W2 act
  Matrix output;   // gate * lin + input
};

struct ModelTape {
  Matrix input;
  Matrix encoded;
  std::vector<BlockTape> blocks;
  Matrix output;
};

BlockTape block_forward_tape(const BlockParams& block, Scheme scheme, const Matrix& seq_in,
                             const ScanOptions& opts = {});
Matrix block_forward(const BlockParams& block, Scheme scheme, const Matrix& seq_in,
                     const ScanOptions& opts = {});

ModelTape model_forward_tape(const ModelParams& params, Scheme scheme, const Matrix& inputs,
                             const ScanOptions& opts = {});
Matrix model_forward(const ModelParams& params, Scheme scheme, const Matrix& inputs,
                     const ScanOptions& opts = {});

// ---- heads ----

// Output at the final true step (length defaults to all rows).
Vec head_classify(const Matrix& outputs, std::size_t length = 0);
// Rows [l1, l1 + l2); requires outputs.rows() == l1 + l2.
Matrix head_forecast(const Matrix& outputs, std::size_t l1, std::size_t l2);

// ---- universality construction ----

enum class Activation { tanh, relu };

struct UniversalityBlock {
  EffectiveA a;
  Matrix B;        // m x p
  Vec bias_b;      // m
  Matrix w_tilde;  // m~ x m
  Vec b_tilde;     // m~
  Matrix W;        // q x m~
  Activation activation = Activation::relu;
};

// Integrates the oscillators with the imex scheme at step dt_fine on inputs
// sampled at t_n = n dt_fine (n = 1..N) and returns W act(W~ y_n + b~).
Matrix universality_block_forward(const UniversalityBlock& ub, const Matrix& inputs,
                                  double dt_fine);

// Block whose outputs are the windowed sine transforms of each input channel
// at the given frequencies, followed by a t^2/4 channel:
// output index i*p + c is L_t u_c(freq_i), the last output is t^2 / 4.
UniversalityBlock make_sine_transform_block(std::span<const double> freqs, std::size_t p);

}  // namespace linoss
