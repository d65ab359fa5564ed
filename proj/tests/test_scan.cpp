#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "linoss/scan.hpp"
#include "oracles.hpp"

using namespace linoss;

namespace {

ScanElement random_element(std::size_t m, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ScanElement e{BlockDiag2(m), State(m)};
  for (std::size_t k = 0; k < m; ++k) {
    e.mat.m11[k] = n(rng);
    e.mat.m12[k] = n(rng);
    e.mat.m21[k] = n(rng);
    e.mat.m22[k] = n(rng);
    e.vec.z[k] = n(rng);
    e.vec.y[k] = n(rng);
  }
  return e;
}

double rel_diff(const ScanElement& a, const ScanElement& b) {
  double num = 0.0, den = 0.0;
  auto acc = [&](const Vec& x, const Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      num = std::max(num, std::abs(x[i] - y[i]));
      den = std::max(den, std::abs(y[i]));
    }
  };
  acc(a.mat.m11, b.mat.m11);
  acc(a.mat.m12, b.mat.m12);
  acc(a.mat.m21, b.mat.m21);
  acc(a.mat.m22, b.mat.m22);
  acc(a.vec.z, b.vec.z);
  acc(a.vec.y, b.vec.y);
  return num / std::max(den, 1e-300);
}

std::vector<ScanElement> stable_elements(std::size_t n, std::size_t m, Scheme s, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  EffectiveA a{Vec(m)};
  for (auto& v : a.diag) v = u(rng);
  const auto t = build_transition(a, 0.5, s);
  std::vector<ScanElement> out(n, ScanElement{t.mat, State(m)});
  for (auto& e : out)
    for (std::size_t k = 0; k < m; ++k) e.vec.z[k] = g(rng), e.vec.y[k] = g(rng);
  return out;
}

}  // namespace

TEST_CASE("combine identity and scalar example") {
  Rng rng(1);
  const auto e = random_element(4, rng);
  const auto id = ScanElement::identity(4);
  CHECK(combine(id, e) == e);
  CHECK(combine(e, id) == e);

  // m = 1 reduced to a scalar: a = (2, 1), b = (3, 1) -> (6, 4)
  ScanElement a{BlockDiag2(Vec{2.0}, Vec{0.0}, Vec{0.0}, Vec{2.0}), State(Vec{1.0}, Vec{0.0})};
  ScanElement b{BlockDiag2(Vec{3.0}, Vec{0.0}, Vec{0.0}, Vec{3.0}), State(Vec{1.0}, Vec{0.0})};
  const auto c = combine(a, b);
  CHECK(c.mat.m11[0] == 6.0);
  CHECK(c.vec.z[0] == 4.0);
}

TEST_CASE("combine matches dense 2x2 arithmetic") {
  Rng rng(2);
  const auto a = random_element(3, rng), b = random_element(3, rng);
  const auto c = combine(a, b);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto ma = oracle::mode_block(a.mat, k), mb = oracle::mode_block(b.mat, k);
    const Eigen::Matrix2d prod = mb * ma;
    const Eigen::Vector2d v = mb * Eigen::Vector2d(a.vec.z[k], a.vec.y[k]) +
                              Eigen::Vector2d(b.vec.z[k], b.vec.y[k]);
    CHECK(c.mat.m11[k] == doctest::Approx(prod(0, 0)).epsilon(1e-14));
    CHECK(c.mat.m12[k] == doctest::Approx(prod(0, 1)).epsilon(1e-14));
    CHECK(c.mat.m21[k] == doctest::Approx(prod(1, 0)).epsilon(1e-14));
    CHECK(c.mat.m22[k] == doctest::Approx(prod(1, 1)).epsilon(1e-14));
    CHECK(c.vec.z[k] == doctest::Approx(v(0)).epsilon(1e-14));
    CHECK(c.vec.y[k] == doctest::Approx(v(1)).epsilon(1e-14));
  }
}

TEST_CASE("combine is associative") {
  Rng rng(3);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_element(1, rng), b = random_element(1, rng), c = random_element(1, rng);
    worst = std::max(worst, rel_diff(combine(combine(a, b), c), combine(a, combine(b, c))));
  }
  CHECK(worst <= 1e-13);
}

TEST_CASE("combine rejects mismatched sizes") {
  Rng rng(4);
  CHECK_THROWS(combine(random_element(2, rng), random_element(3, rng)));
}

TEST_CASE("scan_sequential examples") {
  Rng rng(5);
  const auto e = random_element(2, rng);
  const std::vector<ScanElement> one{e};
  CHECK(scan_sequential(one) == one);
  CHECK_THROWS_WITH(scan_sequential(std::span<const ScanElement>{}), "scan: empty input");

  // M = 2, F = 1: states 1, 3
  const ScanElement s{BlockDiag2(Vec{2.0}, Vec{0.0}, Vec{0.0}, Vec{2.0}), State(Vec{1.0}, Vec{1.0})};
  const auto out = scan_sequential(std::vector<ScanElement>{s, s});
  CHECK(out[0].vec.z[0] == 1.0);
  CHECK(out[1].vec.z[0] == 3.0);

  // identity transitions: cumulative sums
  std::vector<ScanElement> cs;
  for (int i = 1; i <= 5; ++i)
    cs.push_back({BlockDiag2::identity(1), State(Vec{double(i)}, Vec{-double(i)})});
  const auto sum = scan_sequential(cs);
  CHECK(sum[4].vec.z[0] == 15.0);
  CHECK(sum[4].vec.y[0] == -15.0);
}

TEST_CASE("scan_parallel matches sequential") {
  Rng rng(6);
  for (Scheme s : {Scheme::im, Scheme::imex, Scheme::vv}) {
    const auto el = stable_elements(1024, 32, s, rng);
    const auto seq = scan_sequential(el);
    const auto par = scan_parallel(el, 64, 4);
    double worst = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < el.size(); ++i) {
      worst = std::max(worst, max_abs_diff(seq[i].vec.z, par[i].vec.z));
      worst = std::max(worst, max_abs_diff(seq[i].vec.y, par[i].vec.y));
      for (double v : seq[i].vec.z) scale = std::max(scale, std::abs(v));
      for (double v : seq[i].vec.y) scale = std::max(scale, std::abs(v));
    }
    // states reach a few hundred here; compare against their scale
    CHECK(worst <= 1e-12 * scale);
  }
}

TEST_CASE("scan_parallel degenerate chunk equals sequential bitwise") {
  Rng rng(7);
  const auto el = stable_elements(100, 4, Scheme::im, rng);
  CHECK(scan_parallel(el, 100, 3) == scan_sequential(el));
  CHECK(scan_parallel(el, 1000, 1) == scan_sequential(el));
  CHECK_THROWS(scan_parallel(el, 0, 1));
}

TEST_CASE("scan_parallel is independent of worker count") {
  Rng rng(8);
  const auto el = stable_elements(3000, 8, Scheme::imex, rng);
  const auto a = scan_parallel(el, 37, 1);
  const auto b = scan_parallel(el, 37, 5);
  CHECK(a == b);
}

TEST_CASE("solve_recurrence worked imex example") {
  const auto t = build_transition(EffectiveA{{1.0}}, 1.0, Scheme::imex);
  const Matrix b(1, 1, 1.0);
  StateSeq f(3, 1);
  const Vec us[3] = {{1.0}, {0.0}, {0.0}};
  for (int n = 0; n < 3; ++n) {
    const auto fn = assemble_forcing(t, b, us[n]);
    f.z(n, 0) = fn.z[0];
    f.y(n, 0) = fn.y[0];
  }
  for (ScanMode mode : {ScanMode::sequential, ScanMode::parallel}) {
    const auto x = solve_recurrence(t, f, {mode, 2, 2});
    CHECK(x.z(0, 0) == 1.0);
    CHECK(x.y(0, 0) == 1.0);
    CHECK(x.z(1, 0) == 0.0);
    CHECK(x.y(1, 0) == 1.0);
    CHECK(x.z(2, 0) == -1.0);
    CHECK(x.y(2, 0) == 0.0);
  }
}

TEST_CASE("solve_recurrence zero forcing and stability bound") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t m = 16, n = 10000;
  EffectiveA a{Vec(m)};
  for (auto& v : a.diag) v = u(rng);
  const auto t = build_transition(a, 1.0, Scheme::im);
  const StateSeq zero(50, m);
  CHECK(solve_recurrence(t, zero) == zero);

  StateSeq f(n, m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double nrm = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      f.z(i, k) = u(rng) - 0.5;
      f.y(i, k) = u(rng) - 0.5;
      nrm += f.z(i, k) * f.z(i, k) + f.y(i, k) * f.y(i, k);
    }
    total += std::sqrt(nrm);
  }
  const auto x = solve_recurrence(t, f, {ScanMode::parallel, 512, 2});
  double last = 0.0;
  for (std::size_t k = 0; k < m; ++k)
    last += x.z(n - 1, k) * x.z(n - 1, k) + x.y(n - 1, k) * x.y(n - 1, k);
  CHECK(std::sqrt(last) <= total);
}

TEST_CASE("solve_recurrence against a per-mode oracle") {
  Rng rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t m = 3, n = 200;
  EffectiveA a{Vec(m)};
  for (auto& v : a.diag) v = u(rng);
  for (Scheme s : {Scheme::im, Scheme::imex, Scheme::vv}) {
    const auto t = build_transition(a, 0.3, s);
    StateSeq f(n, m);
    for (auto& v : f.z.data()) v = u(rng);
    for (auto& v : f.y.data()) v = u(rng);
    const auto x = solve_recurrence(t, f, {ScanMode::parallel, 16, 3});
    for (std::size_t k = 0; k < m; ++k) {
      std::vector<Eigen::Vector2d> fk;
      for (std::size_t i = 0; i < n; ++i) fk.emplace_back(f.z(i, k), f.y(i, k));
      const auto ref = oracle::recur(oracle::mode_block(t.mat, k), fk);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(x.z(i, k) == doctest::Approx(ref[i](0)).epsilon(1e-12));
        CHECK(x.y(i, k) == doctest::Approx(ref[i](1)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("solve_recurrence is deterministic") {
  Rng rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto t = build_transition(EffectiveA{Vec(8, 0.4)}, 1.0, Scheme::im);
  StateSeq f(5000, 8);
  for (auto& v : f.z.data()) v = u(rng);
  for (auto& v : f.y.data()) v = u(rng);
  const auto a = solve_recurrence(t, f, {ScanMode::parallel, 100, 4});
  const auto b = solve_recurrence(t, f, {ScanMode::parallel, 100, 2});
  CHECK(std::memcmp(a.z.data().data(), b.z.data().data(), a.z.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.y.data().data(), b.y.data().data(), a.y.size() * sizeof(double)) == 0);
}
