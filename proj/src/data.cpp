#include "linoss/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace linoss {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::classify: return "classify";
    case Task::regress: return "regress";
    case Task::forecast: return "forecast";
  }
  return "?";
}

std::string_view to_string(Normalization n) {
  return n == Normalization::none ? "none" : "zscore";
}

Task parse_task(std::string_view s) {
  if (s == "classify") return Task::classify;
  if (s == "regress") return Task::regress;
  if (s == "forecast") return Task::forecast;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

Normalization parse_normalization(std::string_view s) {
  if (s == "none") return Normalization::none;
  if (s == "zscore") return Normalization::zscore;
  throw std::invalid_argument("unknown normalization '" + std::string(s) + "'");
}

std::size_t SequenceBatch::target_dim() const {
  switch (target_kind) {
    case TargetKind::labels: return static_cast<std::size_t>(num_classes());
    case TargetKind::sequence: return seq_targets.cols();
    case TargetKind::per_step: return step_targets.empty() ? 0 : step_targets.front().cols();
    case TargetKind::none: return 0;
  }
  return 0;
}

int SequenceBatch::num_classes() const {
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  return k;
}

SequenceBatch SequenceBatch::subset(std::span<const std::size_t> idx) const {
  SequenceBatch out;
  out.target_kind = target_kind;
  out.forecast_split = forecast_split;
  if (target_kind == TargetKind::sequence) out.seq_targets = Matrix(idx.size(), seq_targets.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t j = idx[i];
    out.inputs.push_back(inputs.at(j));
    out.lengths.push_back(lengths.at(j));
    switch (target_kind) {
      case TargetKind::labels: out.labels.push_back(labels.at(j)); break;
      case TargetKind::sequence:
        std::copy_n(seq_targets.row(j).begin(), seq_targets.cols(), out.seq_targets.row(i).begin());
        break;
      case TargetKind::per_step: out.step_targets.push_back(step_targets.at(j)); break;
      case TargetKind::none: break;
    }
  }
  return out;
}

void validate(const SequenceBatch& b) {
  const std::size_t n = b.size();
  if (b.lengths.size() != n) throw std::invalid_argument("batch: lengths size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (b.inputs[i].rows() != b.time() || b.inputs[i].cols() != b.channels())
      throw std::invalid_argument("batch: ragged inputs");
    if (b.lengths[i] == 0 || b.lengths[i] > b.time())
      throw std::invalid_argument("batch: sequence length out of range");
  }
  switch (b.target_kind) {
    case TargetKind::labels:
      if (b.labels.size() != n) throw std::invalid_argument("batch: labels size mismatch");
      for (int l : b.labels)
        if (l < 0) throw std::invalid_argument("batch: negative label");
      break;
    case TargetKind::sequence:
      if (b.seq_targets.rows() != n) throw std::invalid_argument("batch: targets size mismatch");
      break;
    case TargetKind::per_step: {
      if (b.step_targets.size() != n) throw std::invalid_argument("batch: targets size mismatch");
      const std::size_t rows = b.forecast_split ? b.forecast_split->second : b.time();
      for (const auto& t : b.step_targets)
        if (t.rows() != rows || t.cols() != b.step_targets.front().cols())
          throw std::invalid_argument("batch: per-step target shape mismatch");
      break;
    }
    case TargetKind::none: break;
  }
}

Dataset gen_harmonic(const HarmonicOptions& opts) {
  if (opts.n_train == 0 || opts.n_val == 0 || opts.n_test == 0 || opts.steps == 0 ||
      !(opts.dt > 0.0))
    throw std::invalid_argument("gen_harmonic: parameters must be positive");
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto make = [&](std::size_t n) {
    SequenceBatch b;
    b.target_kind = TargetKind::per_step;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = unif(rng);
      const double c = unif(rng);
      Matrix in(opts.steps, 2), tg(opts.steps, 1);
      for (std::size_t s = 0; s < opts.steps; ++s) {
        const double t = opts.dt * static_cast<double>(s + 1);
        in(s, 0) = a;
        in(s, 1) = c;
        tg(s, 0) = a * std::cos(t) + c * std::sin(t);
      }
      b.inputs.push_back(std::move(in));
      b.step_targets.push_back(std::move(tg));
      b.lengths.push_back(opts.steps);
    }
    return b;
  };
  Dataset d;
  d.train = make(opts.n_train);
  d.val = make(opts.n_val);
  d.test = make(opts.n_test);
  return d;
}

SequenceBatch gen_classify(const ClassifyOptions& opts) {
  if (opts.n_sequences == 0 || opts.length == 0 || opts.channels == 0 || opts.classes < 2)
    throw std::invalid_argument("gen_classify: bad options");
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::normal_distribution<double> noise(0.0, 0.3);
  SequenceBatch b;
  b.target_kind = TargetKind::labels;
  for (std::size_t i = 0; i < opts.n_sequences; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(opts.classes));
    const double freq = 0.1 + 0.15 * label;
    Matrix in(opts.length, opts.channels);
    for (std::size_t c = 0; c < opts.channels; ++c) {
      const double ph = phase(rng);
      for (std::size_t s = 0; s < opts.length; ++s)
        in(s, c) = std::sin(freq * static_cast<double>(s) + ph) + noise(rng);
    }
    b.inputs.push_back(std::move(in));
    b.lengths.push_back(opts.length);
    b.labels.push_back(label);
  }
  return b;
}

Vec sine_transform_oracle(std::span<const double> u, double a, double h) {
  const std::size_t n = u.size();
  Vec s(n), out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) s[j] = std::sin(a * h * static_cast<double>(j));
  for (std::size_t i = 1; i < n; ++i) {
    double acc = 0.5 * (u[i] * s[0] + u[0] * s[i]);
    for (std::size_t j = 1; j < i; ++j) acc += u[i - j] * s[j];
    out[i] = h * acc;
  }
  return out;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f) {
  const double fr[3] = {f.train, f.val, f.test};
  for (double x : fr)
    if (!(x >= 0.0)) throw std::invalid_argument("split fractions must be nonnegative");
  if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
  std::array<std::size_t, 3> cnt{};
  double rem[3];
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fr[i] * static_cast<double>(n);
    cnt[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(cnt[i]);
    used += cnt[i];
  }
  std::array<int, 3> order{0, 1, 2};
  // larger remainder first; near-ties go to the later split
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (std::abs(rem[a] - rem[b]) > 1e-9) return rem[a] > rem[b];
    return a > b;
  });
  for (std::size_t k = 0; used < n; ++k, ++used) ++cnt[order[k % 3]];
  return cnt;
}

Dataset split_batch(const SequenceBatch& all, const SplitFractions& f, std::uint64_t seed) {
  const auto cnt = split_counts(all.size(), f);
  std::vector<std::size_t> perm(all.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto part = [&](std::size_t lo, std::size_t n) {
    std::vector<std::size_t> idx(perm.begin() + lo, perm.begin() + lo + n);
    std::sort(idx.begin(), idx.end());
    return all.subset(idx);
  };
  Dataset d;
  d.train = part(0, cnt[0]);
  d.val = part(cnt[0], cnt[1]);
  d.test = part(cnt[0] + cnt[1], cnt[2]);
  return d;
}

ChannelStats channel_stats(const SequenceBatch& b) {
  const std::size_t c = b.channels();
  ChannelStats s{Vec(c, 0.0), Vec(c, 0.0)};
  double count = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t t = 0; t < b.lengths[i]; ++t) {
      for (std::size_t k = 0; k < c; ++k) s.mean[k] += b.inputs[i](t, k);
      count += 1.0;
    }
  if (count == 0.0) throw std::invalid_argument("channel_stats: empty batch");
  for (auto& m : s.mean) m /= count;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t t = 0; t < b.lengths[i]; ++t)
      for (std::size_t k = 0; k < c; ++k) {
        const double d = b.inputs[i](t, k) - s.mean[k];
        s.stddev[k] += d * d;
      }
  for (auto& v : s.stddev) {
    v = std::sqrt(v / count);
    if (v == 0.0) v = 1.0;
  }
  return s;
}

void apply_zscore(SequenceBatch& b, const ChannelStats& s) {
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t t = 0; t < b.lengths[i]; ++t)
      for (std::size_t k = 0; k < b.channels(); ++k)
        b.inputs[i](t, k) = (b.inputs[i](t, k) - s.mean[k]) / s.stddev[k];
}

SequenceBatch append_time_channel(const SequenceBatch& b) {
  SequenceBatch out = b;
  const std::size_t c = b.channels();
  for (std::size_t i = 0; i < b.size(); ++i) {
    Matrix in(b.time(), c + 1);
    for (std::size_t t = 0; t < b.time(); ++t)
      std::copy_n(b.inputs[i].row(t).begin(), c, in.row(t).begin());
    const std::size_t len = b.lengths[i];
    for (std::size_t t = 0; t < len && len > 1; ++t)
      in(t, c) = static_cast<double>(t) / static_cast<double>(len - 1);
    out.inputs[i] = std::move(in);
  }
  return out;
}

SequenceBatch apply_forecast_mask(const SequenceBatch& b, std::size_t l1, std::size_t l2) {
  if (l1 + l2 != b.time()) throw std::invalid_argument("forecast mask: L1 + L2 must equal length");
  SequenceBatch out = b;
  for (std::size_t l : b.lengths)
    if (l != b.time()) throw std::invalid_argument("forecast mask: sequences must be full length");
  if (out.target_kind == TargetKind::none) {
    out.target_kind = TargetKind::per_step;
    out.step_targets = b.inputs;
  }
  if (out.target_kind != TargetKind::per_step)
    throw std::invalid_argument("forecast mask: needs per-step targets");
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t t = l1; t < l1 + l2; ++t)
      for (auto& v : out.inputs[i].row(t)) v = 0.0;
    const Matrix& full = out.step_targets[i];
    Matrix tail(l2, full.cols());
    for (std::size_t t = 0; t < l2; ++t)
      std::copy_n(full.row(l1 + t).begin(), full.cols(), tail.row(t).begin());
    out.step_targets[i] = std::move(tail);
  }
  out.forecast_split = std::make_pair(l1, l2);
  return out;
}

// ---- CSV ----

namespace {

void put_double(std::ostream& os, double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  os.write(buf, r.ptr - buf);
}

double parse_double(std::string_view cell, std::size_t line) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
  if (b < e && *b == '+') ++b;
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e || b == e)
    throw std::runtime_error("line " + std::to_string(line) + ": non-numeric cell '" +
                             std::string(cell) + "'");
  return v;
}

std::vector<std::string_view> split_cells(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_csv(const SequenceBatch& b, const std::filesystem::path& path) {
  validate(b);
  if (b.forecast_split) throw std::invalid_argument("write_csv: write unmasked batches");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "seq_id,step";
  for (std::size_t k = 0; k < b.channels(); ++k) os << ",ch_" << k;
  if (b.target_kind == TargetKind::labels) os << ",label";
  for (std::size_t k = 0; k < (b.target_kind == TargetKind::labels ? 0 : b.target_dim()); ++k)
    os << ",target_" << k;
  os << '\n';
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t t = 0; t < b.lengths[i]; ++t) {
      os << i << ',' << t;
      for (double v : b.inputs[i].row(t)) os << ',', put_double(os, v);
      switch (b.target_kind) {
        case TargetKind::labels: os << ',' << b.labels[i]; break;
        case TargetKind::sequence:
          for (double v : b.seq_targets.row(i)) os << ',', put_double(os, v);
          break;
        case TargetKind::per_step:
          for (double v : b.step_targets[i].row(t)) os << ',', put_double(os, v);
          break;
        case TargetKind::none: break;
      }
      os << '\n';
    }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

SequenceBatch read_csv(const std::filesystem::path& path, Task task) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_cells(line);
  if (header.size() < 3 || header[0] != "seq_id" || header[1] != "step")
    throw std::runtime_error("line 1: header must start with seq_id,step");
  std::size_t channels = 0, targets = 0;
  bool has_label = false;
  for (std::size_t i = 2; i < header.size(); ++i) {
    const auto h = header[i];
    if (h.starts_with("ch_")) {
      if (targets || has_label) throw std::runtime_error("line 1: channel column after targets");
      ++channels;
    } else if (h == "label") {
      has_label = true;
    } else if (h.starts_with("target_")) {
      ++targets;
    } else {
      throw std::runtime_error("line 1: unknown column '" + std::string(h) + "'");
    }
  }
  if (channels == 0) throw std::runtime_error("line 1: no ch_ columns");
  if (has_label && targets) throw std::runtime_error("line 1: both label and target columns");
  if (task == Task::classify && !has_label)
    throw std::runtime_error(path.string() + ": label column missing for classify task");
  const std::size_t width = header.size();

  struct Raw {
    long long id;
    std::vector<Vec> rows;
    std::vector<Vec> tg;
    std::vector<int> label;
  };
  std::vector<Raw> seqs;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_cells(line);
    if (cells.size() != width)
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected " +
                               std::to_string(width) + " cells, got " +
                               std::to_string(cells.size()));
    const double id_d = parse_double(cells[0], lineno);
    const double step_d = parse_double(cells[1], lineno);
    const auto id = static_cast<long long>(id_d);
    if (seqs.empty() || seqs.back().id != id) {
      for (const auto& s : seqs)
        if (s.id == id)
          throw std::runtime_error("line " + std::to_string(lineno) + ": rows not sorted by seq_id");
      seqs.push_back({id, {}, {}, {}});
    }
    auto& s = seqs.back();
    if (step_d != static_cast<double>(s.rows.size()))
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected step " +
                               std::to_string(s.rows.size()));
    Vec row(channels);
    for (std::size_t k = 0; k < channels; ++k) row[k] = parse_double(cells[2 + k], lineno);
    s.rows.push_back(std::move(row));
    if (has_label) {
      const double l = parse_double(cells[2 + channels], lineno);
      if (l != std::floor(l) || l < 0)
        throw std::runtime_error("line " + std::to_string(lineno) + ": bad label");
      s.label.push_back(static_cast<int>(l));
    } else if (targets) {
      Vec t(targets);
      for (std::size_t k = 0; k < targets; ++k) t[k] = parse_double(cells[2 + channels + k], lineno);
      s.tg.push_back(std::move(t));
    }
  }
  if (seqs.empty()) throw std::runtime_error(path.string() + ": no data rows");

  std::size_t tmax = 0;
  for (const auto& s : seqs) tmax = std::max(tmax, s.rows.size());
  SequenceBatch b;
  bool constant_targets = true;
  for (const auto& s : seqs)
    for (const auto& t : s.tg)
      if (t != s.tg.front()) constant_targets = false;
  if (has_label) b.target_kind = TargetKind::labels;
  else if (targets)
    b.target_kind = (task == Task::regress && constant_targets) ? TargetKind::sequence
                                                                : TargetKind::per_step;
  if (b.target_kind == TargetKind::sequence) b.seq_targets = Matrix(seqs.size(), targets);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    Matrix in(tmax, channels);
    for (std::size_t t = 0; t < s.rows.size(); ++t)
      std::copy(s.rows[t].begin(), s.rows[t].end(), in.row(t).begin());
    b.inputs.push_back(std::move(in));
    b.lengths.push_back(s.rows.size());
    if (has_label) {
      for (int l : s.label)
        if (l != s.label.front()) throw std::runtime_error("label changes within sequence");
      b.labels.push_back(s.label.front());
    } else if (b.target_kind == TargetKind::sequence) {
      std::copy(s.tg.front().begin(), s.tg.front().end(), b.seq_targets.row(i).begin());
    } else if (b.target_kind == TargetKind::per_step) {
      Matrix tg(tmax, targets);
      for (std::size_t t = 0; t < s.tg.size(); ++t)
        std::copy(s.tg[t].begin(), s.tg[t].end(), tg.row(t).begin());
      b.step_targets.push_back(std::move(tg));
    }
  }
  validate(b);
  return b;
}

void write_dataset(const Dataset& d, const std::filesystem::path& dir,
                   const std::map<std::string, std::string>& meta) {
  std::filesystem::create_directories(dir);
  write_csv(d.train, dir / "train.csv");
  write_csv(d.val, dir / "val.csv");
  write_csv(d.test, dir / "test.csv");
  std::ofstream os(dir / "meta.txt");
  for (const auto& [k, v] : meta) os << k << '=' << v << '\n';
}

std::map<std::string, std::string> read_meta(const std::filesystem::path& dir) {
  std::map<std::string, std::string> meta;
  std::ifstream is(dir / "meta.txt");
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

namespace {

void finish(Dataset& d, const DatasetSpec& spec) {
  if (spec.normalization == Normalization::zscore) {
    const auto stats = channel_stats(d.train);
    apply_zscore(d.train, stats);
    apply_zscore(d.val, stats);
    apply_zscore(d.test, stats);
  }
  if (spec.include_time) {
    d.train = append_time_channel(d.train);
    d.val = append_time_channel(d.val);
    d.test = append_time_channel(d.test);
  }
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const DatasetSpec& spec) {
  Dataset d = split_batch(read_csv(path, spec.task), spec.split, spec.seed);
  finish(d, spec);
  return d;
}

Dataset load_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  if (std::filesystem::is_regular_file(dir)) return load_csv(dir, spec);
  if (std::filesystem::exists(dir / "train.csv")) {
    Dataset d;
    d.train = read_csv(dir / "train.csv", spec.task);
    d.val = read_csv(dir / "val.csv", spec.task);
    d.test = read_csv(dir / "test.csv", spec.task);
    finish(d, spec);
    return d;
  }
  if (std::filesystem::exists(dir / "data.csv")) return load_csv(dir / "data.csv", spec);
  throw std::runtime_error(dir.string() + ": no train.csv or data.csv");
}

}  // namespace linoss
