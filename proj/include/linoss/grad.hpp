#pragma once

// Reverse-mode gradients: adjoint of the linear recurrence, block and model
// backward passes, and a central finite-difference checker.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "linoss/network.hpp"
#include "linoss/scan.hpp"

namespace linoss {

// Gradients mirror the parameter layout.
using Gradients = ModelParams;

struct RecurrenceAdjoint {
  StateSeq cot_forcings;  // dL/dF_n (equals the adjoint state lambda_n)
  BlockDiag2 cot_mat;     // dL/d of the four diagonal blocks of M
};

// Reverse sweep lambda_n = cot_n + M^T lambda_{n+1}, evaluated as a scan over
// the reversed sequence with the transposed blocks.
RecurrenceAdjoint adjoint_recurrence(const BlockDiag2& mat, const StateSeq& states,
                                     const StateSeq& cot_states, const ScanOptions& opts = {});

// Recovers x_0..x_{N-1} backwards from x_N for the volume-preserving imex
// scheme (det M = 1): x_{n-1} = M^{-1}(x_n - F_n). Row n of the result holds
// x_{n+1}, matching the stored-state layout.
StateSeq reconstruct_states_imex(const DiscreteTransition& trans, const State& final_state,
                                 const StateSeq& forcings);

enum class MemoryMode { stored, reversal };

struct GradOptions {
  ScanOptions scan;
  MemoryMode memory = MemoryMode::stored;
};

// Accumulates parameter gradients of one block into `grads` and returns the
// cotangent of the block input.
Matrix block_backward(const BlockParams& block, const BlockTape& tape, const Matrix& d_out,
                      BlockParams& grads, const GradOptions& opts = {});

// Gradient of a scalar loss given dL/d(model output) for one sequence.
Gradients model_backward(const ModelParams& params, const ModelTape& tape,
                         const Matrix& d_output, const GradOptions& opts = {});

// Adds src into dst (same layout).
void accumulate(Gradients& dst, const Gradients& src, double scale = 1.0);

struct FdArrayReport {
  std::string name;
  std::size_t checked = 0;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool passed = true;
};

struct FdReport {
  std::vector<FdArrayReport> arrays;
  bool passed() const;
  std::string table() const;
};

struct FdOptions {
  double step = 1e-6;
  double rel_tol = 1e-5;
  double abs_floor = 1e-8;
  std::size_t max_coords = 200;
  std::uint64_t seed = 0;
  // Return true to skip coordinate `index` of array `name` (e.g. a ReLU kink).
  std::function<bool(const std::string& name, std::size_t index)> skip;
};

// Central differences on the parameter views `params` (mutated and restored
// in place) against the analytic gradient views `grads`. A coordinate passes
// when |analytic - fd| <= rel_tol * max(|analytic|, |fd|) + abs_floor.
FdReport finite_diff_check(const std::function<double()>& loss_fn,
                           const std::vector<ArrayRef>& params,
                           const std::vector<ConstArrayRef>& grads, const FdOptions& opts = {});

// Skip predicate for ReLU-parameterized a_hat entries within `margin` of 0.
std::function<bool(const std::string&, std::size_t)> relu_kink_skip(const ModelParams& params,
                                                                    double margin = 1e-4);

}  // namespace linoss
