#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "linoss/data.hpp"

using namespace linoss;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("linoss_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SequenceBatch labelled(std::size_t n, std::size_t len) {
  SequenceBatch b;
  b.target_kind = TargetKind::labels;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix m(len, 2);
    for (std::size_t t = 0; t < len; ++t) m(t, 0) = double(i), m(t, 1) = double(t) * 0.5 - 1.0;
    b.inputs.push_back(m);
    b.lengths.push_back(len);
    b.labels.push_back(int(i % 3));
  }
  return b;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

}  // namespace

TEST_CASE("gen_harmonic shapes and closed form") {
  HarmonicOptions o;
  o.n_train = 20, o.n_val = 5, o.n_test = 5, o.steps = 300, o.seed = 4;
  const auto d = gen_harmonic(o);
  CHECK(d.train.size() == 20);
  CHECK(d.val.size() == 5);
  CHECK(d.test.size() == 5);
  CHECK(d.train.time() == 300);
  CHECK(d.train.channels() == 2);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const double a = d.train.inputs[i](0, 0), b = d.train.inputs[i](0, 1);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(d.train.inputs[i](299, 0) == a);
    for (std::size_t s = 0; s < 300; ++s) {
      const double t = 0.1 * double(s + 1);
      const double y = d.train.step_targets[i](s, 0);
      const double yp = -a * std::sin(t) + b * std::cos(t);
      CHECK(std::abs(y * y + yp * yp - (a * a + b * b)) <= 1e-10);
    }
  }
  CHECK_NOTHROW(validate(d.train));
}

TEST_CASE("gen_harmonic default sizes") {
  HarmonicOptions o;
  o.steps = 2;
  const auto d = gen_harmonic(o);
  CHECK(d.train.size() == 2000);
  CHECK(d.val.size() == 500);
  CHECK(d.test.size() == 500);
}

TEST_CASE("sine_transform_oracle") {
  const double h = 1e-3;
  const std::size_t n = 5001;
  const Vec zero(n, 0.0);
  for (double v : sine_transform_oracle(zero, 1.0, h)) CHECK(v == 0.0);
  const Vec one(n, 1.0);
  const auto l = sine_transform_oracle(one, 1.0, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    worst = std::max(worst, std::abs(l[i] - (1.0 - std::cos(h * double(i)))));
  CHECK(worst <= 1e-6);

  // second order: halving h divides the error by about 4
  auto err = [](double hh) {
    const std::size_t nn = std::size_t(std::lround(4.0 / hh)) + 1;
    Vec u(nn);
    for (std::size_t i = 0; i < nn; ++i) u[i] = std::sin(2.0 * hh * double(i));
    const auto v = sine_transform_oracle(u, 3.0, hh);
    const double t = hh * double(nn - 1);
    // int_0^t sin(2(t - s)) sin(3 s) ds
    const double exact = (3.0 * std::sin(2.0 * t) - 2.0 * std::sin(3.0 * t)) / 5.0;
    return std::abs(v[nn - 1] - exact);
  };
  const double ratio = err(0.01) / err(0.005);
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("split_counts largest remainder") {
  const auto c = split_counts(10, {0.7, 0.15, 0.15});
  CHECK(c[0] == 7);
  CHECK(c[1] == 1);
  CHECK(c[2] == 2);
  const auto d = split_counts(3000, {0.7, 0.15, 0.15});
  CHECK(d[0] == 2100);
  CHECK(d[1] == 450);
  CHECK(d[2] == 450);
  CHECK_THROWS(split_counts(10, {0.5, 0.2, 0.2}));
}

TEST_CASE("split_batch is deterministic, disjoint and exhaustive") {
  const auto all = labelled(10, 4);
  const auto a = split_batch(all, {0.7, 0.15, 0.15}, 11);
  const auto b = split_batch(all, {0.7, 0.15, 0.15}, 11);
  CHECK(a.train.size() == 7);
  CHECK(a.val.size() == 1);
  CHECK(a.test.size() == 2);
  std::set<double> ids;
  for (const auto* s : {&a.train, &a.val, &a.test})
    for (const auto& m : s->inputs) ids.insert(m(0, 0));
  CHECK(ids.size() == 10);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train.inputs[i] == b.train.inputs[i]);
}

TEST_CASE("zscore uses training statistics") {
  auto all = labelled(30, 5);
  DatasetSpec spec;
  spec.normalization = Normalization::zscore;
  spec.seed = 2;
  const auto dir = temp_dir("zscore");
  write_csv(all, dir / "data.csv");
  const auto d = load_csv(dir / "data.csv", spec);
  const auto s = channel_stats(d.train);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(std::abs(s.mean[k]) <= 1e-12);
    CHECK(std::abs(s.stddev[k] - 1.0) <= 1e-12);
  }
}

TEST_CASE("csv round trip is bit-identical") {
  const auto dir = temp_dir("roundtrip");
  HarmonicOptions o;
  o.n_train = 4, o.n_val = 2, o.n_test = 2, o.steps = 50, o.seed = 9;
  const auto d = gen_harmonic(o);
  write_dataset(d, dir, {{"task", "regress"}});
  const auto back = read_csv(dir / "train.csv", Task::regress);
  CHECK(back.target_kind == TargetKind::per_step);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.inputs[i] == d.train.inputs[i]);
    CHECK(back.step_targets[i] == d.train.step_targets[i]);
  }
  CHECK(read_meta(dir).at("task") == "regress");

  const auto lab = labelled(5, 3);
  write_csv(lab, dir / "lab.csv");
  const auto lb = read_csv(dir / "lab.csv", Task::classify);
  CHECK(lb.labels == lab.labels);
  CHECK(lb.inputs == lab.inputs);
}

TEST_CASE("csv variable lengths are padded") {
  const auto dir = temp_dir("ragged_len");
  write_text(dir / "a.csv",
             "seq_id,step,ch_0,label\n0,0,1.5,1\n0,1,2.5,1\n0,2,3.5,1\n1,0,-1,0\n");
  const auto b = read_csv(dir / "a.csv", Task::classify);
  CHECK(b.time() == 3);
  CHECK(b.lengths == std::vector<std::size_t>{3, 1});
  CHECK(b.inputs[1](1, 0) == 0.0);
  CHECK(b.labels == std::vector<int>{1, 0});
}

TEST_CASE("csv errors") {
  const auto dir = temp_dir("errors");
  write_text(dir / "ragged.csv", "seq_id,step,ch_0,ch_1,label\n0,0,1,2,0\n0,1,1,0\n");
  CHECK_THROWS_WITH_AS(read_csv(dir / "ragged.csv", Task::classify), doctest::Contains("line 3"),
                       std::runtime_error);
  write_text(dir / "nonnum.csv", "seq_id,step,ch_0,label\n0,0,abc,0\n");
  CHECK_THROWS_WITH_AS(read_csv(dir / "nonnum.csv", Task::classify),
                       doctest::Contains("non-numeric"), std::runtime_error);
  write_text(dir / "nolabel.csv", "seq_id,step,ch_0\n0,0,1\n");
  CHECK_THROWS_WITH_AS(read_csv(dir / "nolabel.csv", Task::classify),
                       doctest::Contains("label column missing"), std::runtime_error);
}

TEST_CASE("append_time_channel") {
  SequenceBatch b;
  Matrix m(4, 1, 7.0);
  b.inputs = {m, m};
  b.lengths = {2, 4};
  const auto t = append_time_channel(b);
  CHECK(t.channels() == 2);
  CHECK(t.inputs[0](0, 1) == 0.0);
  CHECK(t.inputs[0](1, 1) == 1.0);
  CHECK(t.inputs[0](2, 1) == 0.0);
  CHECK(t.inputs[0](3, 1) == 0.0);
  CHECK(t.inputs[1](3, 1) == 1.0);
  CHECK(t.inputs[1](1, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(append_time_channel(t).channels() == 3);
}

TEST_CASE("apply_forecast_mask") {
  SequenceBatch b;
  Matrix m(6, 2, 1.0);
  b.inputs = {m};
  b.lengths = {6};
  const auto same = apply_forecast_mask(b, 6, 0);
  CHECK(same.inputs[0] == m);
  const auto all = apply_forecast_mask(b, 0, 6);
  for (double v : all.inputs[0].data()) CHECK(v == 0.0);
  CHECK(all.step_targets[0] == m);
  const auto half = apply_forecast_mask(b, 4, 2);
  CHECK(half.inputs[0](3, 0) == 1.0);
  CHECK(half.inputs[0](4, 0) == 0.0);
  CHECK(half.step_targets[0].rows() == 2);
  CHECK(half.forecast_split == std::make_pair(std::size_t(4), std::size_t(2)));
  CHECK_THROWS(apply_forecast_mask(b, 3, 2));

  SequenceBatch w;
  w.inputs = {Matrix(1440, 1, 2.0)};
  w.lengths = {1440};
  const auto wm = apply_forecast_mask(w, 720, 720);
  CHECK(wm.inputs[0](719, 0) == 2.0);
  CHECK(wm.inputs[0](720, 0) == 0.0);
  CHECK(wm.step_targets[0].rows() == 720);
}

TEST_CASE("gen_classify") {
  ClassifyOptions o;
  o.n_sequences = 12;
  o.classes = 3;
  const auto b = gen_classify(o);
  CHECK(b.size() == 12);
  CHECK(b.num_classes() == 3);
  CHECK_NOTHROW(validate(b));
}
