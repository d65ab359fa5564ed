#pragma once

// Associative scan over (block-diagonal matrix, vector) pairs and the linear
// recurrence solver x_n = M x_{n-1} + F_n, x_0 = 0, built on it.

#include <cstddef>
#include <span>
#include <vector>

#include "linoss/lincore.hpp"

namespace linoss {

struct ScanElement {
  BlockDiag2 mat;
  State vec;

  std::size_t size() const { return mat.size(); }
  static ScanElement identity(std::size_t m) { return {BlockDiag2::identity(m), State(m)}; }
  friend bool operator==(const ScanElement&, const ScanElement&) = default;
};

// (a1, a2) . (b1, b2) = (b1 a1, b1 a2 + b2); O(m).
ScanElement combine(const ScanElement& a, const ScanElement& b);
BlockDiag2 block_product(const BlockDiag2& b, const BlockDiag2& a);  // b * a

std::vector<ScanElement> scan_sequential(std::span<const ScanElement> elems);

// Chunked two-pass scan: left-to-right local scans per chunk, a Blelloch
// exclusive scan over chunk aggregates, then a prefix fix-up per chunk.
// Output is bit-identical for a fixed chunk_size whatever the worker count.
std::vector<ScanElement> scan_parallel(std::span<const ScanElement> elems,
                                       std::size_t chunk_size, std::size_t workers = 0);

// Sequence of states, one row per time step (N x m each).
struct StateSeq {
  Matrix z;
  Matrix y;

  StateSeq() = default;
  StateSeq(std::size_t n, std::size_t m) : z(n, m), y(n, m) {}
  std::size_t length() const { return z.rows(); }
  std::size_t modes() const { return z.cols(); }
  State at(std::size_t n) const;
  friend bool operator==(const StateSeq&, const StateSeq&) = default;
};

enum class ScanMode { sequential, parallel };

struct ScanOptions {
  ScanMode mode = ScanMode::sequential;
  std::size_t chunk_size = 1024;
  std::size_t workers = 1;
};

// Returns [x_1, ..., x_N].
StateSeq solve_recurrence(const BlockDiag2& mat, const StateSeq& forcings,
                          const ScanOptions& opts = {});
StateSeq solve_recurrence(const DiscreteTransition& trans, const StateSeq& forcings,
                          const ScanOptions& opts = {});

}  // namespace linoss
