#include "linoss/scan.hpp"

#include <algorithm>
#include <stdexcept>

#include "linoss/parallel.hpp"

namespace linoss {

BlockDiag2 block_product(const BlockDiag2& b, const BlockDiag2& a) {
  const std::size_t m = a.size();
  BlockDiag2 p(m);
  for (std::size_t k = 0; k < m; ++k) {
    p.m11[k] = b.m11[k] * a.m11[k] + b.m12[k] * a.m21[k];
    p.m12[k] = b.m11[k] * a.m12[k] + b.m12[k] * a.m22[k];
    p.m21[k] = b.m21[k] * a.m11[k] + b.m22[k] * a.m21[k];
    p.m22[k] = b.m21[k] * a.m12[k] + b.m22[k] * a.m22[k];
  }
  return p;
}

ScanElement combine(const ScanElement& a, const ScanElement& b) {
  const std::size_t m = a.size();
  if (b.size() != m || a.vec.size() != m || b.vec.size() != m)
    throw std::invalid_argument("combine: dimension mismatch");
  ScanElement out{block_product(b.mat, a.mat), State(m)};
  apply_block(b.mat, a.vec.z, a.vec.y, out.vec.z, out.vec.y);
  for (std::size_t k = 0; k < m; ++k) {
    out.vec.z[k] += b.vec.z[k];
    out.vec.y[k] += b.vec.y[k];
  }
  return out;
}

std::vector<ScanElement> scan_sequential(std::span<const ScanElement> elems) {
  if (elems.empty()) throw std::invalid_argument("scan: empty input");
  std::vector<ScanElement> out;
  out.reserve(elems.size());
  out.push_back(elems[0]);
  for (std::size_t i = 1; i < elems.size(); ++i) out.push_back(combine(out.back(), elems[i]));
  return out;
}

namespace {

// In-place Blelloch exclusive scan; the tree shape depends only on the size.
void blelloch_exclusive(std::vector<ScanElement>& agg, std::size_t m) {
  std::size_t n = 1;
  while (n < agg.size()) n <<= 1;
  agg.resize(n, ScanElement::identity(m));
  for (std::size_t d = 1; d < n; d <<= 1)
    for (std::size_t i = 2 * d - 1; i < n; i += 2 * d) agg[i] = combine(agg[i - d], agg[i]);
  agg[n - 1] = ScanElement::identity(m);
  for (std::size_t d = n >> 1; d >= 1; d >>= 1) {
    for (std::size_t i = 2 * d - 1; i < n; i += 2 * d) {
      ScanElement left = std::move(agg[i - d]);
      agg[i - d] = agg[i];
      agg[i] = combine(agg[i - d], left);
    }
  }
}

std::size_t chunk_count(std::size_t n, std::size_t chunk) { return (n + chunk - 1) / chunk; }

}  // namespace

std::vector<ScanElement> scan_parallel(std::span<const ScanElement> elems,
                                       std::size_t chunk_size, std::size_t workers) {
  if (chunk_size == 0) throw std::invalid_argument("scan: chunk_size must be positive");
  if (elems.empty()) throw std::invalid_argument("scan: empty input");
  const std::size_t n = elems.size();
  const std::size_t m = elems[0].size();
  const std::size_t chunks = chunk_count(n, chunk_size);
  std::vector<ScanElement> out(n);

  // reduce each chunk, scan the aggregates, then rescan every chunk from its carry
  std::vector<ScanElement> prefix(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * chunk_size, hi = std::min(n, lo + chunk_size);
    ScanElement acc = elems[lo];
    for (std::size_t i = lo + 1; i < hi; ++i) acc = combine(acc, elems[i]);
    prefix[c] = std::move(acc);
  });
  blelloch_exclusive(prefix, m);

  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * chunk_size, hi = std::min(n, lo + chunk_size);
    out[lo] = c == 0 ? elems[lo] : combine(prefix[c], elems[lo]);
    for (std::size_t i = lo + 1; i < hi; ++i) out[i] = combine(out[i - 1], elems[i]);
  });
  return out;
}

State StateSeq::at(std::size_t n) const {
  auto zr = z.row(n);
  auto yr = y.row(n);
  return {Vec(zr.begin(), zr.end()), Vec(yr.begin(), yr.end())};
}

namespace {

// x_n = M x_{n-1} + F_n over rows [lo, hi) starting from x_{lo-1} = 0.
void local_solve(const BlockDiag2& mat, const StateSeq& f, StateSeq& x, std::size_t lo,
                 std::size_t hi) {
  const std::size_t m = mat.size();
  for (std::size_t k = 0; k < m; ++k) {
    x.z(lo, k) = f.z(lo, k);
    x.y(lo, k) = f.y(lo, k);
  }
  for (std::size_t n = lo + 1; n < hi; ++n) {
    const double* zp = x.z.data().data() + (n - 1) * m;
    const double* yp = x.y.data().data() + (n - 1) * m;
    double* zc = x.z.data().data() + n * m;
    double* yc = x.y.data().data() + n * m;
    const double* fz = f.z.data().data() + n * m;
    const double* fy = f.y.data().data() + n * m;
    for (std::size_t k = 0; k < m; ++k) {
      zc[k] = mat.m11[k] * zp[k] + mat.m12[k] * yp[k] + fz[k];
      yc[k] = mat.m21[k] * zp[k] + mat.m22[k] * yp[k] + fy[k];
    }
  }
}

}  // namespace

StateSeq solve_recurrence(const BlockDiag2& mat, const StateSeq& forcings,
                          const ScanOptions& opts) {
  const std::size_t n = forcings.length();
  const std::size_t m = mat.size();
  if (n == 0) throw std::invalid_argument("solve_recurrence: empty forcing sequence");
  if (forcings.modes() != m || forcings.y.cols() != m || forcings.y.rows() != n)
    throw std::invalid_argument("solve_recurrence: dimension mismatch");
  StateSeq x(n, m);
  if (opts.mode == ScanMode::sequential) {
    local_solve(mat, forcings, x, 0, n);
    return x;
  }
  if (opts.chunk_size == 0) throw std::invalid_argument("scan: chunk_size must be positive");
  const std::size_t cs = opts.chunk_size;
  const std::size_t chunks = chunk_count(n, cs);
  // Aggregate of chunk c is (M^len, local end state).
  std::vector<ScanElement> agg(chunks);
  parallel_for(chunks, opts.workers, [&](std::size_t c) {
    const std::size_t lo = c * cs, hi = std::min(n, lo + cs);
    local_solve(mat, forcings, x, lo, hi);
    BlockDiag2 power = mat;
    for (std::size_t i = lo + 1; i < hi; ++i) power = block_product(mat, power);
    agg[c] = {std::move(power), x.at(hi - 1)};
  });
  if (chunks == 1) return x;
  blelloch_exclusive(agg, m);
  parallel_for(chunks - 1, opts.workers, [&](std::size_t c1) {
    const std::size_t c = c1 + 1;
    const std::size_t lo = c * cs, hi = std::min(n, lo + cs);
    State carry = agg[c].vec;
    State next(m);
    for (std::size_t i = lo; i < hi; ++i) {
      apply_block(mat, carry.z, carry.y, next.z, next.y);
      std::swap(carry, next);
      for (std::size_t k = 0; k < m; ++k) {
        x.z(i, k) += carry.z[k];
        x.y(i, k) += carry.y[k];
      }
    }
  });
  return x;
}

StateSeq solve_recurrence(const DiscreteTransition& trans, const StateSeq& forcings,
                          const ScanOptions& opts) {
  return solve_recurrence(trans.mat, forcings, opts);
}

}  // namespace linoss
