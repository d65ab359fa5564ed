#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "linoss/train.hpp"

using namespace linoss;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.hidden = 4;
  c.state = 4;
  c.n_blocks = 2;
  c.task = Task::regress;
  c.batch_size = 4;
  c.epochs = 3;
  c.seed = 5;
  return c;
}

Dataset small_harmonic() {
  HarmonicOptions o;
  o.n_train = 12, o.n_val = 4, o.n_test = 4, o.steps = 30, o.seed = 1;
  return gen_harmonic(o);
}

}  // namespace

TEST_CASE("mse_loss") {
  Matrix a(2, 3, 1.5);
  CHECK(mse_loss(a, a).value == 0.0);
  const auto s = mse_loss(Matrix(1, 1, 3.0), Matrix(1, 1, 1.0));
  CHECK(s.value == 4.0);
  CHECK(s.cot(0, 0) == 4.0);
  Matrix p(2, 3), t(2, 3);
  const double pv[6] = {1, 2, 3, 4, 5, 6}, tv[6] = {0, 2, 1, 4, 8, 6};
  std::copy(pv, pv + 6, p.data().begin());
  std::copy(tv, tv + 6, t.data().begin());
  CHECK(mse_loss(p, t).value == doctest::Approx((1.0 + 4.0 + 9.0) / 6.0));
  CHECK(mse_loss(p, t, 1).value == doctest::Approx((1.0 + 4.0) / 3.0));
}

TEST_CASE("cross_entropy") {
  const Vec u(5, 0.3);
  CHECK(cross_entropy(u, 2).value == doctest::Approx(std::log(5.0)));
  CHECK(cross_entropy(Vec{50.0, 0.0, 0.0}, 0).value < 1e-20);
  const Vec z{0.2, -1.0, 0.7};
  const auto l = cross_entropy(z, 1);
  for (std::size_t k = 0; k < 3; ++k) {
    Vec zp = z, zm = z;
    zp[k] += 1e-6, zm[k] -= 1e-6;
    const double fd = (cross_entropy(zp, 1).value - cross_entropy(zm, 1).value) / 2e-6;
    CHECK(l.cot(0, k) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("adam_step") {
  ModelParams p;
  p.enc_w = Matrix(1, 1, 0.5);
  p.enc_b = {0.0};
  p.dec_w = Matrix(1, 1, 1.0);
  p.dec_b = {0.0};
  auto st = make_adam(p);
  auto g = zeros_like(p);
  const ModelParams before = p;
  adam_step(p, g, st, 0.1);
  CHECK(p.enc_w == before.enc_w);
  g.enc_w(0, 0) = 2.0;
  adam_step(p, g, st, 0.1);
  // step 2: m = 0.1*2 = 0.2, v = 0.001*4 = 0.004, bias corrections 1-0.9^2, 1-0.999^2
  const double mh = 0.2 / (1 - 0.81), vh = 0.004 / (1 - 0.999 * 0.999);
  CHECK(p.enc_w(0, 0) == doctest::Approx(0.5 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-14));
}

TEST_CASE("config parsing") {
  const auto c = parse_config("hidden = 8\n# comment\nscheme = imex  \np_in = auto\ndt=0.5\n");
  CHECK(c.hidden == 8);
  CHECK(c.scheme == Scheme::imex);
  CHECK(c.p_in == 0);
  CHECK(c.dt == 0.5);
  CHECK_THROWS_WITH_AS(parse_config("hiden = 3\n"), doctest::Contains("unknown key"),
                       std::invalid_argument);
  CHECK_THROWS(parse_config("dt = 1.5\n"));
  CHECK_THROWS(parse_config("n_blocks = 0\n"));
  CHECK_THROWS(parse_config("lr = -1\n"));
  CHECK_THROWS(parse_config("init_mode = gaussian\n"));
  CHECK(parse_config("lr_schedule = cosine\n").cosine_lr);
  CHECK_FALSE(c.cosine_lr);
  CHECK_THROWS(parse_config("lr_schedule = step\n"));
  const auto round = parse_config(format_config(c));
  CHECK(format_config(round) == format_config(c));
}

TEST_CASE("evaluate") {
  // perfect classifier: zero model with the decoder bias set to the label
  SequenceBatch b;
  b.target_kind = TargetKind::labels;
  b.inputs = {Matrix(3, 1, 1.0)};
  b.lengths = {3};
  b.labels = {1};
  Rng rng(1);
  auto p = init_model({1, 2, 2, 2, 1}, 1.0, InitMode::uniform01, ParamMode::relu, rng);
  p.dec_w = Matrix(2, 2);
  p.dec_b = {0.0, 5.0};
  CHECK(evaluate(p, Scheme::im, b).scalars.at("accuracy") == 1.0);

  // zero predictor on zero targets
  SequenceBatch r;
  r.target_kind = TargetKind::per_step;
  r.inputs = {Matrix(4, 1, 0.3), Matrix(4, 1, -0.2)};
  r.lengths = {4, 4};
  r.step_targets = {Matrix(4, 2), Matrix(4, 2)};
  auto q = init_model({1, 2, 2, 2, 1}, 1.0, InitMode::uniform01, ParamMode::relu, rng);
  q.dec_w = Matrix(2, 2);
  q.dec_b = {0.0, 0.0};
  const auto m = evaluate(q, Scheme::imex, r);
  CHECK(m.scalars.at("mse") == 0.0);
  CHECK(m.per_step_mse == Vec(4, 0.0));
}

TEST_CASE("evaluate agrees with a direct recomputation") {
  HarmonicOptions o;
  o.n_train = 5, o.n_val = 1, o.n_test = 1, o.steps = 12;
  const auto d = gen_harmonic(o);
  Rng rng(2);
  const auto p = init_model({2, 3, 3, 1, 1}, 0.5, InitMode::uniform01, ParamMode::relu, rng);
  const auto m = evaluate(p, Scheme::vv, d.train);
  double se = 0.0, ae = 0.0;
  Vec curve(12, 0.0);
  for (std::size_t i = 0; i < 5; ++i) {
    const Matrix out = model_forward(p, Scheme::vv, d.train.inputs[i]);
    for (std::size_t t = 0; t < 12; ++t) {
      const double e = out(t, 0) - d.train.step_targets[i](t, 0);
      se += e * e;
      ae += std::abs(e);
      curve[t] += e * e / 5.0;
    }
  }
  CHECK(m.scalars.at("mse") == doctest::Approx(se / 60.0).epsilon(1e-14));
  CHECK(m.scalars.at("mae") == doctest::Approx(ae / 60.0).epsilon(1e-14));
  for (std::size_t t = 0; t < 12; ++t)
    CHECK(m.per_step_mse[t] == doctest::Approx(curve[t]).epsilon(1e-12));
}

TEST_CASE("training learns a constant target through the bias path") {
  SequenceBatch b;
  b.target_kind = TargetKind::per_step;
  for (int i = 0; i < 4; ++i) {
    b.inputs.push_back(Matrix(5, 1, 0.0));
    b.step_targets.push_back(Matrix(5, 1, 0.75));
    b.lengths.push_back(5);
  }
  Dataset d{b, b, b};
  ModelConfig c = tiny_config();
  c.lr = 0.05;
  c.batch_size = 4;
  c.epochs = 200;
  c.patience = 0;
  const auto res = train(c, d);
  const auto m = evaluate(res.last, b);
  CHECK(m.scalars.at("mse") < 1e-6);
}

TEST_CASE("training is deterministic and does not mutate data") {
  const Dataset d = small_harmonic();
  const Dataset copy = d;
  ModelConfig c = tiny_config();
  c.workers = 3;
  const auto a = train(c, d);
  c.workers = 1;
  const auto b = train(c, d);
  CHECK(metrics_csv(a.log) == metrics_csv(b.log));
  const auto pa = named_arrays(a.best.params), pb = named_arrays(b.best.params);
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::equal(pa[i].values.begin(), pa[i].values.end(), pb[i].values.begin()));
  c.workers = 3;
  CHECK(serialize_checkpoint(train(c, d).best) == serialize_checkpoint(a.best));
  CHECK(d.train.inputs == copy.train.inputs);
  CHECK(d.train.step_targets == copy.train.step_targets);
}

TEST_CASE("a small step lowers the loss on a frozen batch") {
  const Dataset d = small_harmonic();
  std::vector<std::size_t> idx{0, 1, 2};
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto p = init_model({2, 4, 4, 1, 2}, 1.0, InitMode::uniform01, ParamMode::relu, rng);
    Gradients g;
    const double before = batch_loss(p, Scheme::im, d.train, idx, &g, 1);
    auto st = make_adam(p);
    adam_step(p, g, st, 1e-5);
    if (batch_loss(p, Scheme::im, d.train, idx, nullptr, 1) < before) ++improved;
  }
  CHECK(improved == 20);
}

TEST_CASE("divergence is reported with epoch and batch") {
  Dataset d = small_harmonic();
  d.train.step_targets[3](5, 0) = std::nan("");
  ModelConfig c = tiny_config();
  CHECK_THROWS_WITH_AS(train(c, d), doctest::Contains("epoch 1, batch"), std::runtime_error);
}

TEST_CASE("checkpoint round trip and errors") {
  const Dataset d = small_harmonic();
  const auto res = train(tiny_config(), d);
  const auto dir = fs::temp_directory_path() / "linoss_test_ckpt";
  fs::create_directories(dir);
  save_checkpoint(res.last, dir / "a.ckpt");
  const auto back = load_checkpoint(dir / "a.ckpt");
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(res.last));
  CHECK(back.epoch == res.last.epoch);
  CHECK(back.rng_state == res.last.rng_state);
  const auto pa = named_arrays(back.params), pb = named_arrays(res.last.params);
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::memcmp(pa[i].values.data(), pb[i].values.data(), pa[i].values.size() * 8) == 0);

  auto bytes = serialize_checkpoint(res.last);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LNOS");
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad), doctest::Contains("magic"), std::runtime_error);
  bad = bytes;
  bad[4] = 7;
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad), doctest::Contains("version 7"),
                       std::runtime_error);
  bad = bytes;
  bad.resize(bad.size() - 3);
  CHECK_THROWS(deserialize_checkpoint(bad));
}

TEST_CASE("classification training runs on the stand-in data") {
  ClassifyOptions o;
  o.n_sequences = 20;
  o.length = 16;
  const auto all = gen_classify(o);
  const auto d = split_batch(all, {0.7, 0.15, 0.15}, 3);
  ModelConfig c = tiny_config();
  c.task = Task::classify;
  c.epochs = 2;
  const auto res = train(c, d);
  CHECK(res.epochs_run == 2);
  const auto m = evaluate(res.best, d.test);
  CHECK(m.scalars.count("accuracy") == 1);
}
