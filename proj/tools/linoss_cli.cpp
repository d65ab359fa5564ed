#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "linoss/data.hpp"
#include "linoss/grad.hpp"
#include "linoss/scan.hpp"
#include "linoss/spectral.hpp"
#include "linoss/train.hpp"

using namespace linoss;
namespace fs = std::filesystem;

namespace {

std::vector<std::pair<std::string, std::string>> parse_sets(const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

Dataset load_for(const ModelConfig& cfg, const fs::path& dir) {
  Dataset d = load_dataset(dir, cfg.dataset_spec());
  if (cfg.task == Task::forecast && cfg.forecast_l2 > 0) {
    d.train = apply_forecast_mask(d.train, cfg.forecast_l1, cfg.forecast_l2);
    d.val = apply_forecast_mask(d.val, cfg.forecast_l1, cfg.forecast_l2);
    d.test = apply_forecast_mask(d.test, cfg.forecast_l1, cfg.forecast_l2);
  }
  return d;
}

void write_curve(const Vec& curve, const fs::path& path) {
  std::ofstream os(path);
  os << "step,mse\n" << std::setprecision(17);
  for (std::size_t t = 0; t < curve.size(); ++t) os << t << ',' << curve[t] << '\n';
}

void print_metrics(const std::string& split, const Metrics& m) {
  for (const auto& [k, v] : m.scalars)
    std::cout << split << ' ' << k << ' ' << std::setprecision(8) << v << '\n';
}

int cmd_train(const fs::path& config, const fs::path& data, const fs::path& out,
              const std::vector<std::string>& sets, bool quiet) {
  ModelConfig cfg = load_config(config);
  for (const auto& [k, v] : parse_sets(sets)) apply_override(cfg, k, v);
  validate(cfg);
  const Dataset d = load_for(cfg, data);
  fs::create_directories(out);
  TrainHooks hooks;
  if (!quiet)
    hooks.on_metric = [](const MetricRow& r) {
      std::cout << "epoch " << r.epoch << ' ' << r.split << ' ' << r.metric << ' '
                << std::setprecision(8) << r.value << std::endl;
    };
  TrainResult res = train(cfg, d, hooks);
  const Metrics test = evaluate(res.best, d.test);
  for (const auto& [k, v] : test.scalars) res.log.push_back({res.best.epoch, "test", k, v});
  write_metrics_csv(res.log, out / "metrics.csv");
  save_checkpoint(res.best, out / "best.ckpt");
  save_checkpoint(res.last, out / "last.ckpt");
  if (!test.per_step_mse.empty()) write_curve(test.per_step_mse, out / "test_per_step_mse.csv");
  std::cout << "epochs run " << res.epochs_run << ", best epoch " << res.best.epoch << '\n';
  print_metrics("test", test);
  return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data, const std::string& split,
             const fs::path& curve) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const Dataset d = load_for(ck.config, data);
  const SequenceBatch& b = split == "train" ? d.train : split == "val" ? d.val : d.test;
  const Metrics m = evaluate(ck, b);
  print_metrics(split, m);
  if (!curve.empty() && !m.per_step_mse.empty()) write_curve(m.per_step_mse, curve);
  return 0;
}

int cmd_spectrum(const std::string& scheme_s, std::size_t m, double dt, double amax,
                 const std::string& moments, std::uint64_t seed, const fs::path& csv) {
  const Scheme scheme = parse_scheme(scheme_s);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, amax);
  EffectiveA a{Vec(m)};
  for (auto& v : a.diag) v = unif(rng);
  const SpectrumReport r = spectrum(a, dt, scheme);
  std::cout << format_spectrum(r);
  if (!moments.empty()) {
    std::cout << "moments of |lambda| under A ~ U[0, " << amax << "] (im):\n";
    std::stringstream ss(moments);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const std::uint64_t n = std::stoull(tok);
      const auto mc = moment_mc(n, dt, amax, 1000000, seed);
      std::cout << "  N=" << n << std::setprecision(12) << "  closed " << moment_im(n, dt, amax)
                << "  mc " << mc.value << " +- " << mc.std_error << '\n';
    }
  }
  if (!csv.empty()) {
    std::ofstream os(csv);
    os << spectrum_csv(r);
  }
  return 0;
}

int cmd_bench(std::size_t n, std::size_t m, const std::string& mode, std::size_t chunk,
              std::size_t workers, std::size_t reps, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  EffectiveA a{Vec(m)};
  for (auto& v : a.diag) v = unif(rng);
  const auto trans = build_transition(a, 0.5, Scheme::im);
  StateSeq f(n, m);
  for (auto& v : f.z.data()) v = unif(rng) - 0.5;
  for (auto& v : f.y.data()) v = unif(rng) - 0.5;
  ScanOptions opts;
  opts.mode = mode == "par" ? ScanMode::parallel : ScanMode::sequential;
  if (mode != "par" && mode != "seq") throw std::invalid_argument("--mode must be seq or par");
  opts.chunk_size = chunk;
  opts.workers = workers;
  double best = 1e300, checksum = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const StateSeq s = solve_recurrence(trans, f, opts);
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    checksum = 0.0;
    for (double v : s.y.data()) checksum += v;
  }
  std::printf("%10s %6s %6s %8s %12s %22s\n", "N", "m", "mode", "workers", "seconds", "checksum");
  std::printf("%10zu %6zu %6s %8zu %12.6f %22.15e\n", n, m, mode.c_str(), workers, best, checksum);
  return 0;
}

int cmd_check_grads(const fs::path& config, const std::vector<std::string>& sets,
                    std::size_t length, std::size_t batch) {
  ModelConfig cfg = load_config(config);
  for (const auto& [k, v] : parse_sets(sets)) apply_override(cfg, k, v);
  if (cfg.p_in == 0) cfg.p_in = 3;
  if (cfg.out == 0) cfg.out = 2;
  validate(cfg, false);
  Rng rng(cfg.seed);
  ModelParams params = init_model(cfg.dims(), cfg.dt, cfg.init_mode, cfg.param_mode, rng);
  // nonzero biases so every path is exercised
  std::normal_distribution<double> nd(0.0, 0.3);
  for (auto& blk : params.blocks)
    for (auto& v : blk.layer.bias_b) v = nd(rng);
  SequenceBatch b;
  b.target_kind = TargetKind::per_step;
  for (std::size_t i = 0; i < batch; ++i) {
    Matrix in(length, cfg.p_in), tg(length, cfg.out);
    for (auto& v : in.data()) v = nd(rng);
    for (auto& v : tg.data()) v = nd(rng);
    b.inputs.push_back(in);
    b.step_targets.push_back(tg);
    b.lengths.push_back(length);
  }
  std::vector<std::size_t> idx(batch);
  std::iota(idx.begin(), idx.end(), 0);
  Gradients g;
  batch_loss(params, cfg.scheme, b, idx, &g, 1);
  FdOptions fo;
  fo.seed = cfg.seed;
  if (cfg.param_mode == ParamMode::relu) fo.skip = relu_kink_skip(params);
  const FdReport rep = finite_diff_check(
      [&] { return batch_loss(params, cfg.scheme, b, idx, nullptr, 1); }, named_arrays(params),
      named_arrays(std::as_const(g)), fo);
  std::cout << rep.table();
  std::cout << (rep.passed() ? "PASS" : "FAIL") << '\n';
  return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LinOSS: linear oscillatory state-space models"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "train a model");
  fs::path t_config, t_data, t_out;
  std::vector<std::string> t_sets;
  bool t_quiet = false;
  train_cmd->add_option("--config", t_config, "config file")->required();
  train_cmd->add_option("--data", t_data, "dataset directory or CSV")->required();
  train_cmd->add_option("--out", t_out, "output directory")->required();
  train_cmd->add_option("--set", t_sets, "override a config key (key=value)");
  train_cmd->add_flag("--quiet", t_quiet, "no per-epoch output");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  fs::path e_ckpt, e_data, e_curve;
  std::string e_split = "test";
  eval_cmd->add_option("--ckpt", e_ckpt)->required();
  eval_cmd->add_option("--data", e_data)->required();
  eval_cmd->add_option("--split", e_split)->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--curve", e_curve, "write the per-step MSE curve here");

  auto* spec_cmd = app.add_subcommand("spectrum", "eigenvalues of a random transition");
  std::string s_scheme = "im", s_moments;
  std::size_t s_m = 8;
  double s_dt = 1.0, s_amax = 1.0;
  std::uint64_t s_seed = 0;
  fs::path s_csv;
  spec_cmd->add_option("--scheme", s_scheme)->check(CLI::IsMember({"im", "imex", "vv"}));
  spec_cmd->add_option("--m", s_m);
  spec_cmd->add_option("--dt", s_dt);
  spec_cmd->add_option("--amax", s_amax);
  spec_cmd->add_option("--moments", s_moments, "comma-separated N values");
  spec_cmd->add_option("--seed", s_seed);
  spec_cmd->add_option("--csv", s_csv, "also write eigenvalues as CSV");

  auto* bench_cmd = app.add_subcommand("scan-bench", "time the recurrence solver");
  std::size_t b_n = 1 << 16, b_m = 16, b_chunk = 1024, b_workers = 0, b_reps = 3;
  std::string b_mode = "par";
  bench_cmd->add_option("--n", b_n);
  bench_cmd->add_option("--m", b_m);
  bench_cmd->add_option("--mode", b_mode)->check(CLI::IsMember({"seq", "par"}));
  bench_cmd->add_option("--chunk", b_chunk);
  bench_cmd->add_option("--workers", b_workers, "0 = hardware concurrency");
  bench_cmd->add_option("--reps", b_reps);

  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset");
  gen_cmd->require_subcommand(1);
  auto* gen_h = gen_cmd->add_subcommand("harmonic", "harmonic motion (train/val/test CSVs)");
  HarmonicOptions ho;
  fs::path g_out;
  gen_h->add_option("--out", g_out)->required();
  gen_h->add_option("--seed", ho.seed);
  gen_h->add_option("--n-train", ho.n_train);
  gen_h->add_option("--n-val", ho.n_val);
  gen_h->add_option("--n-test", ho.n_test);
  gen_h->add_option("--steps", ho.steps);
  gen_h->add_option("--dt", ho.dt);
  auto* gen_c = gen_cmd->add_subcommand("classify", "noisy-sinusoid classification (data.csv)");
  ClassifyOptions co;
  gen_c->add_option("--out", g_out)->required();
  gen_c->add_option("--seed", co.seed);
  gen_c->add_option("--n", co.n_sequences);
  gen_c->add_option("--length", co.length);
  gen_c->add_option("--channels", co.channels);
  gen_c->add_option("--classes", co.classes);

  auto* cg_cmd = app.add_subcommand("check-grads", "finite-difference gradient check");
  fs::path c_config;
  std::vector<std::string> c_sets;
  std::size_t c_len = 16, c_batch = 3;
  cg_cmd->add_option("--config", c_config)->required();
  cg_cmd->add_option("--set", c_sets);
  cg_cmd->add_option("--length", c_len);
  cg_cmd->add_option("--batch", c_batch);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(t_config, t_data, t_out, t_sets, t_quiet);
    if (*eval_cmd) return cmd_eval(e_ckpt, e_data, e_split, e_curve);
    if (*spec_cmd) return cmd_spectrum(s_scheme, s_m, s_dt, s_amax, s_moments, s_seed, s_csv);
    if (*bench_cmd) return cmd_bench(b_n, b_m, b_mode, b_chunk, b_workers, b_reps, 0);
    if (*gen_h) {
      const Dataset d = gen_harmonic(ho);
      write_dataset(d, g_out,
                    {{"task", "regress"}, {"channels", "2"}, {"length", std::to_string(ho.steps)},
                     {"seed", std::to_string(ho.seed)}, {"dt", std::to_string(ho.dt)},
                     {"targets", "per_step"}});
      std::cout << "wrote " << g_out.string() << '\n';
      return 0;
    }
    if (*gen_c) {
      const SequenceBatch b = gen_classify(co);
      fs::create_directories(g_out);
      write_csv(b, g_out / "data.csv");
      std::ofstream meta(g_out / "meta.txt");
      meta << "task=classify\nchannels=" << co.channels << "\nlength=" << co.length
           << "\nseed=" << co.seed << "\nclasses=" << co.classes << '\n';
      std::cout << "wrote " << (g_out / "data.csv").string() << '\n';
      return 0;
    }
    if (*cg_cmd) return cmd_check_grads(c_config, c_sets, c_len, c_batch);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
