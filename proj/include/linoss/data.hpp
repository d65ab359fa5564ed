#pragma once

// Sequence batches, synthetic generators (harmonic motion, a classification
// stand-in), the windowed sine transform oracle, and CSV ingestion.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linoss/tensor.hpp"

namespace linoss {

enum class Task { classify, regress, forecast };
enum class Normalization { none, zscore };
enum class TargetKind { none, labels, sequence, per_step };

std::string_view to_string(Task t);
std::string_view to_string(Normalization n);
Task parse_task(std::string_view s);
Normalization parse_normalization(std::string_view s);

// Sequences are right-padded with zeros to a common time dimension.
struct SequenceBatch {
  std::vector<Matrix> inputs;  // each time x channels
  std::vector<std::size_t> lengths;
  TargetKind target_kind = TargetKind::none;
  std::vector<int> labels;              // labels
  Matrix seq_targets;                   // sequence: batch x k
  std::vector<Matrix> step_targets;     // per_step: each time x k
  std::optional<std::pair<std::size_t, std::size_t>> forecast_split;  // (L1, L2)

  std::size_t size() const { return inputs.size(); }
  std::size_t time() const { return inputs.empty() ? 0 : inputs.front().rows(); }
  std::size_t channels() const { return inputs.empty() ? 0 : inputs.front().cols(); }
  std::size_t target_dim() const;
  int num_classes() const;  // max label + 1

  SequenceBatch subset(std::span<const std::size_t> idx) const;
};

// Throws std::invalid_argument if shapes or lengths are inconsistent.
void validate(const SequenceBatch& b);

struct SplitFractions {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

struct DatasetSpec {
  Task task = Task::classify;
  Normalization normalization = Normalization::none;
  bool include_time = false;
  SplitFractions split;
  std::uint64_t seed = 0;
};

struct Dataset {
  SequenceBatch train, val, test;
};

// ---- harmonic motion ----

struct HarmonicOptions {
  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::size_t n_test = 500;
  double dt = 0.1;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
};

// y(t) = A cos t + B sin t on t = dt (1..steps), A, B ~ U[0, 1]; inputs are
// two constant channels (A, B); per-step scalar targets.
Dataset gen_harmonic(const HarmonicOptions& opts = {});

// ---- classification stand-in ----

struct ClassifyOptions {
  std::size_t n_sequences = 60;
  std::size_t length = 64;
  std::size_t channels = 3;
  int classes = 2;
  std::uint64_t seed = 0;
};

// Noisy sinusoids whose frequency depends on the class.
SequenceBatch gen_classify(const ClassifyOptions& opts = {});

// ---- oracle ----

// L_t u(A) = int_0^t u(t - tau) sin(A tau) dtau by the trapezoid rule, u
// sampled at t_j = j h (u[0] at t = 0). Returns one value per grid point.
Vec sine_transform_oracle(std::span<const double> u, double a, double h);

// ---- splits, normalization, masking ----

// Largest-remainder counts; ties go to the later split.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitFractions& f);
Dataset split_batch(const SequenceBatch& all, const SplitFractions& f, std::uint64_t seed);

struct ChannelStats {
  Vec mean, stddev;
};
// Per-channel statistics over the true (unpadded) steps.
ChannelStats channel_stats(const SequenceBatch& b);
void apply_zscore(SequenceBatch& b, const ChannelStats& s);

// Appends t_n = n / (len - 1) over each sequence's true length (0 for a
// length-1 sequence and on padding). Not idempotent.
SequenceBatch append_time_channel(const SequenceBatch& b);

// Zeroes inputs on [L1, L1 + L2) and records the split.
SequenceBatch apply_forecast_mask(const SequenceBatch& b, std::size_t l1, std::size_t l2);

// ---- CSV ----

// Header `seq_id,step,ch_0..ch_{c-1}[,label | ,target_0..]`. Per-step targets
// are written on every row; sequence targets and labels repeat on every row
// of the sequence.
void write_csv(const SequenceBatch& b, const std::filesystem::path& path);
SequenceBatch read_csv(const std::filesystem::path& path, Task task);

// Dataset directory: train.csv, val.csv, test.csv plus meta.txt (key=value).
void write_dataset(const Dataset& d, const std::filesystem::path& dir,
                   const std::map<std::string, std::string>& meta);
std::map<std::string, std::string> read_meta(const std::filesystem::path& dir);

// Reads a single CSV, splits by seeded permutation, normalizes with training
// statistics, appends time if requested.
Dataset load_csv(const std::filesystem::path& path, const DatasetSpec& spec);
// Either a directory with train/val/test CSVs or with a single data.csv.
Dataset load_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

}  // namespace linoss
