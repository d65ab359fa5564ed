#include "linoss/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "linoss/parallel.hpp"

namespace linoss {

// ---- config ----

DatasetSpec ModelConfig::dataset_spec() const {
  DatasetSpec s;
  s.task = task;
  s.normalization = normalization;
  s.include_time = include_time;
  s.split = {split_train, split_val, split_test};
  s.seed = seed;
  return s;
}

void validate(const ModelConfig& c, bool allow_auto) {
  auto bad = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument("config: " + key + " " + why);
  };
  if (!allow_auto && c.p_in == 0) bad("p_in", "must be positive");
  if (!allow_auto && c.out == 0) bad("out", "must be positive");
  if (c.hidden == 0) bad("hidden", "must be positive");
  if (c.state == 0) bad("state", "must be positive");
  if (c.n_blocks == 0) bad("n_blocks", "must be at least 1");
  if (!(c.dt > 0.0 && c.dt <= 1.0)) bad("dt", "must lie in (0, 1]");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) bad("lr", "must be positive");
  if (c.batch_size == 0) bad("batch_size", "must be positive");
  if (c.epochs == 0) bad("epochs", "must be positive");
  if (!(c.grad_clip >= 0.0)) bad("grad_clip", "must be nonnegative");
  if (c.init_mode == InitMode::gaussian && c.param_mode == ParamMode::relu)
    bad("init_mode", "incompatible: ReLU would disable ~half the dimensions under gaussian init");
  if (c.forecast_l2 > 0 && c.task != Task::forecast) bad("forecast_l2", "requires task = forecast");
  const double s = c.split_train + c.split_val + c.split_test;
  if (std::abs(s - 1.0) > 1e-9 || c.split_train <= 0.0 || c.split_val < 0.0 || c.split_test < 0.0)
    bad("split_train", "split fractions must be nonnegative and sum to 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v, bool allow_auto = false) {
  if (allow_auto && v == "auto") return 0;
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || x < 0) throw std::invalid_argument("config: bad integer for " + key);
  return static_cast<std::size_t>(x);
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size()) throw std::invalid_argument("config: bad number for " + key);
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key);
}

std::string real_str(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void apply_override(ModelConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "p_in") c.p_in = parse_size(key, v, true);
  else if (key == "hidden") c.hidden = parse_size(key, v);
  else if (key == "state") c.state = parse_size(key, v);
  else if (key == "out") c.out = parse_size(key, v, true);
  else if (key == "n_blocks") c.n_blocks = parse_size(key, v);
  else if (key == "scheme") c.scheme = parse_scheme(v);
  else if (key == "param_mode") c.param_mode = parse_param_mode(v);
  else if (key == "init_mode") c.init_mode = parse_init_mode(v);
  else if (key == "dt") c.dt = parse_real(key, v);
  else if (key == "include_time") c.include_time = parse_bool(key, v);
  else if (key == "task") c.task = parse_task(v);
  else if (key == "normalization") c.normalization = parse_normalization(v);
  else if (key == "lr") c.lr = parse_real(key, v);
  else if (key == "lr_schedule") {
    if (v != "constant" && v != "cosine")
      throw std::invalid_argument("config: lr_schedule must be constant or cosine");
    c.cosine_lr = v == "cosine";
  }
  else if (key == "batch_size") c.batch_size = parse_size(key, v);
  else if (key == "epochs") c.epochs = parse_size(key, v);
  else if (key == "patience") c.patience = parse_size(key, v);
  else if (key == "grad_clip") c.grad_clip = parse_real(key, v);
  else if (key == "forecast_l1") c.forecast_l1 = parse_size(key, v);
  else if (key == "forecast_l2") c.forecast_l2 = parse_size(key, v);
  else if (key == "split_train") c.split_train = parse_real(key, v);
  else if (key == "split_val") c.split_val = parse_real(key, v);
  else if (key == "split_test") c.split_test = parse_real(key, v);
  else if (key == "workers") c.workers = parse_size(key, v);
  else if (key == "seed") c.seed = parse_size(key, v);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

ModelConfig parse_config(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    apply_override(c, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  validate(c);
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const ModelConfig& c) {
  std::ostringstream os;
  auto dim = [](std::size_t v) { return v == 0 ? std::string("auto") : std::to_string(v); };
  os << "p_in = " << dim(c.p_in) << '\n'
     << "hidden = " << c.hidden << '\n'
     << "state = " << c.state << '\n'
     << "out = " << dim(c.out) << '\n'
     << "n_blocks = " << c.n_blocks << '\n'
     << "scheme = " << to_string(c.scheme) << '\n'
     << "param_mode = " << to_string(c.param_mode) << '\n'
     << "init_mode = " << to_string(c.init_mode) << '\n'
     << "dt = " << real_str(c.dt) << '\n'
     << "include_time = " << (c.include_time ? "true" : "false") << '\n'
     << "task = " << to_string(c.task) << '\n'
     << "normalization = " << to_string(c.normalization) << '\n'
     << "lr = " << real_str(c.lr) << '\n'
     << "lr_schedule = " << (c.cosine_lr ? "cosine" : "constant") << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "epochs = " << c.epochs << '\n'
     << "patience = " << c.patience << '\n'
     << "grad_clip = " << real_str(c.grad_clip) << '\n'
     << "forecast_l1 = " << c.forecast_l1 << '\n'
     << "forecast_l2 = " << c.forecast_l2 << '\n'
     << "split_train = " << real_str(c.split_train) << '\n'
     << "split_val = " << real_str(c.split_val) << '\n'
     << "split_test = " << real_str(c.split_test) << '\n'
     << "workers = " << c.workers << '\n'
     << "seed = " << c.seed << '\n';
  return os.str();
}

void resolve_dims(ModelConfig& c, const SequenceBatch& train) {
  if (c.p_in == 0) c.p_in = train.channels();
  if (c.out == 0) c.out = train.target_dim();
  if (c.p_in != train.channels())
    throw std::invalid_argument("config: p_in = " + std::to_string(c.p_in) + " but data has " +
                                std::to_string(train.channels()) + " channels");
  if (c.out == 0) throw std::invalid_argument("config: cannot infer out from data without targets");
}

// ---- losses ----

LossValue mse_loss(const Matrix& pred, const Matrix& target, std::size_t rows) {
  if (rows == 0) rows = pred.rows();
  if (pred.cols() != target.cols() || rows > pred.rows() || rows > target.rows())
    throw std::invalid_argument("mse_loss: shape mismatch");
  LossValue l{0.0, Matrix(pred.rows(), pred.cols())};
  const double scale = 1.0 / static_cast<double>(rows * pred.cols());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double d = pred(r, c) - target(r, c);
      l.value += d * d;
      l.cot(r, c) = 2.0 * d * scale;
    }
  l.value *= scale;
  return l;
}

LossValue cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw std::invalid_argument("cross_entropy: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  LossValue l{lse - logits[static_cast<std::size_t>(label)], Matrix(1, logits.size())};
  for (std::size_t k = 0; k < logits.size(); ++k) l.cot(0, k) = std::exp(logits[k] - lse);
  l.cot(0, static_cast<std::size_t>(label)) -= 1.0;
  return l;
}

// ---- Adam ----

AdamState make_adam(const ModelParams& params) {
  AdamState s;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto p = named_arrays(params);
  auto g = named_arrays(grads);
  auto m = named_arrays(state.m);
  auto v = named_arrays(state.v);
  if (p.size() != g.size() || p.size() != m.size())
    throw std::invalid_argument("adam_step: layout mismatch");
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a].values.size() != g[a].values.size())
      throw std::invalid_argument("adam_step: shape mismatch in " + p[a].name);
    for (std::size_t i = 0; i < p[a].values.size(); ++i) {
      const double gi = g[a].values[i];
      double& mi = m[a].values[i];
      double& vi = v[a].values[i];
      mi = state.beta1 * mi + (1.0 - state.beta1) * gi;
      vi = state.beta2 * vi + (1.0 - state.beta2) * gi * gi;
      p[a].values[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + state.eps);
    }
  }
}

// ---- per-sequence loss ----

namespace {

Matrix truncated(const Matrix& m, std::size_t rows) {
  if (rows == m.rows()) return m;
  Matrix out(rows, m.cols());
  std::copy_n(m.data().begin(), rows * m.cols(), out.data().begin());
  return out;
}

struct SeqLoss {
  double value;
  Matrix cot;  // over the model output rows
};

SeqLoss loss_on_output(const Matrix& out, const SequenceBatch& b, std::size_t i) {
  const std::size_t len = out.rows();
  SeqLoss s{0.0, Matrix(len, out.cols())};
  switch (b.target_kind) {
    case TargetKind::labels: {
      auto l = cross_entropy(out.row(len - 1), b.labels.at(i));
      s.value = l.value;
      std::copy_n(l.cot.data().begin(), out.cols(), s.cot.row(len - 1).begin());
      break;
    }
    case TargetKind::sequence: {
      Matrix pred(1, out.cols()), tg(1, out.cols());
      std::copy_n(out.row(len - 1).begin(), out.cols(), pred.data().begin());
      std::copy_n(b.seq_targets.row(i).begin(), out.cols(), tg.data().begin());
      auto l = mse_loss(pred, tg);
      s.value = l.value;
      std::copy_n(l.cot.data().begin(), out.cols(), s.cot.row(len - 1).begin());
      break;
    }
    case TargetKind::per_step: {
      if (b.forecast_split) {
        const auto [l1, l2] = *b.forecast_split;
        auto l = mse_loss(head_forecast(out, l1, l2), b.step_targets.at(i));
        s.value = l.value;
        std::copy(l.cot.data().begin(), l.cot.data().end(), s.cot.row(l1).begin());
      } else {
        auto l = mse_loss(out, b.step_targets.at(i), len);
        s.value = l.value;
        s.cot = std::move(l.cot);
      }
      break;
    }
    case TargetKind::none: throw std::invalid_argument("loss: batch has no targets");
  }
  return s;
}

std::size_t model_rows(const SequenceBatch& b, std::size_t i) {
  return b.forecast_split ? b.time() : b.lengths.at(i);
}

}  // namespace

double sequence_loss(const ModelParams& params, Scheme scheme, const SequenceBatch& b,
                     std::size_t i, Gradients* grads, const GradOptions& opts) {
  const Matrix in = truncated(b.inputs.at(i), model_rows(b, i));
  if (!grads) {
    const Matrix out = model_forward(params, scheme, in, opts.scan);
    return loss_on_output(out, b, i).value;
  }
  const ModelTape tape = model_forward_tape(params, scheme, in, opts.scan);
  const SeqLoss l = loss_on_output(tape.output, b, i);
  if (!std::isfinite(l.value)) throw std::runtime_error("non-finite loss");
  *grads = model_backward(params, tape, l.cot, opts);
  return l.value;
}

double batch_loss(const ModelParams& params, Scheme scheme, const SequenceBatch& b,
                  std::span<const std::size_t> idx, Gradients* grads, std::size_t workers,
                  const GradOptions& opts) {
  if (idx.empty()) throw std::invalid_argument("batch_loss: empty batch");
  std::vector<double> losses(idx.size());
  std::vector<Gradients> per(grads ? idx.size() : 0);
  parallel_for(idx.size(), workers, [&](std::size_t k) {
    losses[k] = sequence_loss(params, scheme, b, idx[k], grads ? &per[k] : nullptr, opts);
  });
  const double scale = 1.0 / static_cast<double>(idx.size());
  double total = 0.0;
  for (double l : losses) total += l;
  if (grads) {
    *grads = zeros_like(params);
    for (const auto& g : per) accumulate(*grads, g, scale);
  }
  return total * scale;
}

// ---- evaluation ----

Metrics evaluate(const ModelParams& params, Scheme scheme, const SequenceBatch& b,
                 std::size_t workers) {
  validate(b);
  if (b.size() == 0) throw std::invalid_argument("evaluate: empty batch");
  const std::size_t n = b.size();
  std::vector<Matrix> outs(n);
  parallel_for(n, workers, [&](std::size_t i) {
    outs[i] = model_forward(params, scheme, truncated(b.inputs[i], model_rows(b, i)));
  });
  Metrics m;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) loss += loss_on_output(outs[i], b, i).value;
  m.scalars["loss"] = loss / static_cast<double>(n);
  if (b.target_kind == TargetKind::labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto last = outs[i].row(outs[i].rows() - 1);
      const auto best = std::max_element(last.begin(), last.end()) - last.begin();
      if (best == b.labels[i]) ++correct;
    }
    m.scalars["accuracy"] = static_cast<double>(correct) / static_cast<double>(n);
    return m;
  }
  double se = 0.0, ae = 0.0, count = 0.0;
  if (b.target_kind == TargetKind::sequence) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < b.seq_targets.cols(); ++k) {
        const double d = outs[i](outs[i].rows() - 1, k) - b.seq_targets(i, k);
        se += d * d;
        ae += std::abs(d);
        count += 1.0;
      }
  } else {
    const std::size_t off = b.forecast_split ? b.forecast_split->first : 0;
    const std::size_t steps = b.forecast_split ? b.forecast_split->second : b.time();
    Vec step_se(steps, 0.0), step_n(steps, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const Matrix& tg = b.step_targets[i];
      const std::size_t rows = b.forecast_split ? steps : b.lengths[i];
      for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t k = 0; k < tg.cols(); ++k) {
          const double d = outs[i](off + t, k) - tg(t, k);
          se += d * d;
          ae += std::abs(d);
          count += 1.0;
          step_se[t] += d * d;
          step_n[t] += 1.0;
        }
    }
    m.per_step_mse.resize(steps);
    for (std::size_t t = 0; t < steps; ++t)
      m.per_step_mse[t] = step_n[t] > 0.0 ? step_se[t] / step_n[t] : 0.0;
  }
  m.scalars["mse"] = se / count;
  m.scalars["mae"] = ae / count;
  return m;
}

Metrics evaluate(const Checkpoint& ckpt, const SequenceBatch& b) {
  return evaluate(ckpt.params, ckpt.config.scheme, b, ckpt.config.workers);
}

// ---- training ----

namespace {

std::string rng_text(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

double global_norm(const Gradients& g) {
  double s = 0.0;
  for (const auto& a : named_arrays(g))
    for (double v : a.values) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TrainResult train(const ModelConfig& config_in, const Dataset& data, const TrainHooks& hooks) {
  ModelConfig config = config_in;
  resolve_dims(config, data.train);
  validate(config, false);
  validate(data.train);
  validate(data.val);

  Rng rng(config.seed);
  Checkpoint ck;
  ck.config = config;
  ck.params = init_model(config.dims(), config.dt, config.init_mode, config.param_mode, rng);
  ck.adam = make_adam(ck.params);

  const bool higher_better = data.train.target_kind == TargetKind::labels;
  const std::string val_metric = higher_better ? "accuracy" : "mse";
  TrainResult res;
  res.best_val = higher_better ? -1.0 : std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  auto emit = [&](std::uint64_t epoch, const std::string& split, const std::string& metric,
                  double v) {
    res.log.push_back({epoch, split, metric, v});
    if (hooks.on_metric) hooks.on_metric(res.log.back());
  };

  const std::size_t n = data.train.size();
  std::vector<std::size_t> perm(n);
  const double total_steps =
      double(config.epochs) * double((n + config.batch_size - 1) / config.batch_size);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t lo = 0; lo < n; lo += config.batch_size, ++batch_no) {
      const std::size_t hi = std::min(n, lo + config.batch_size);
      std::span<const std::size_t> idx(perm.data() + lo, hi - lo);
      Gradients g;
      double l = 0.0;
      try {
        l = batch_loss(ck.params, config.scheme, data.train, idx, &g, config.workers);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_no) + ": " + e.what());
      }
      if (!std::isfinite(l))
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_no) + ": non-finite loss");
      if (config.grad_clip > 0.0) {
        const double gn = global_norm(g);
        if (gn > config.grad_clip)
          for (auto& a : named_arrays(g))
            for (double& v : a.values) v *= config.grad_clip / gn;
      }
      double lr = config.lr;
      if (config.cosine_lr) lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / total_steps));
      ++step;
      adam_step(ck.params, g, ck.adam, lr);
      loss_sum += l * static_cast<double>(hi - lo);
    }
    ck.epoch = epoch;
    ck.rng_state = rng_text(rng);
    emit(epoch, "train", "loss", loss_sum / static_cast<double>(n));
    const Metrics vm = evaluate(ck.params, config.scheme, data.val, config.workers);
    for (const auto& [k, v] : vm.scalars) emit(epoch, "val", k, v);
    const double v = vm.scalars.at(val_metric);
    if (!std::isfinite(v))
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                               ": non-finite validation metric");
    const bool better = higher_better ? v > res.best_val : v < res.best_val;
    res.epochs_run = epoch;
    if (better || epoch == 1) {
      res.best_val = v;
      res.best = ck;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      break;
    }
  }
  res.last = ck;
  return res;
}

std::string metrics_csv(const std::vector<MetricRow>& log) {
  std::ostringstream os;
  os << "epoch,split,metric,value\n" << std::setprecision(17);
  for (const auto& r : log) os << r.epoch << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
  return os.str();
}

void write_metrics_csv(const std::vector<MetricRow>& log, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << metrics_csv(log);
}

}  // namespace linoss
