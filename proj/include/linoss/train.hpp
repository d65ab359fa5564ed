#pragma once

// Losses, Adam, the training / evaluation loops, model configs and
// checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "linoss/data.hpp"
#include "linoss/grad.hpp"
#include "linoss/network.hpp"

namespace linoss {

// p_in and out may be left at 0 ("auto") and resolved from a dataset.
struct ModelConfig {
  std::size_t p_in = 0;
  std::size_t hidden = 64;
  std::size_t state = 64;
  std::size_t out = 0;
  std::size_t n_blocks = 2;
  Scheme scheme = Scheme::im;
  ParamMode param_mode = ParamMode::relu;
  InitMode init_mode = InitMode::uniform01;
  double dt = 1.0;
  bool include_time = false;
  Task task = Task::classify;
  Normalization normalization = Normalization::none;
  double lr = 1e-3;
  bool cosine_lr = false;  // decay lr to 0 over all steps
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  double grad_clip = 0.0;  // global norm, 0 = off
  std::size_t forecast_l1 = 0;
  std::size_t forecast_l2 = 0;
  double split_train = 0.7;
  double split_val = 0.15;
  double split_test = 0.15;
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  ModelDims dims() const { return {p_in, hidden, state, out, n_blocks}; }
  DatasetSpec dataset_spec() const;
};

// Throws std::invalid_argument naming the offending key.
void validate(const ModelConfig& c, bool allow_auto = true);

// Flat `key = value` text; '#' starts a comment; unknown keys are errors.
ModelConfig parse_config(const std::string& text);
ModelConfig load_config(const std::filesystem::path& path);
void apply_override(ModelConfig& c, const std::string& key, const std::string& value);
std::string format_config(const ModelConfig& c);

// Fills p_in / out left at 0 from the data.
void resolve_dims(ModelConfig& c, const SequenceBatch& train);

// ---- losses ----

struct LossValue {
  double value = 0.0;
  Matrix cot;  // dL/dpred
};

// Mean of (pred - target)^2 over the first `rows` rows (all if 0).
LossValue mse_loss(const Matrix& pred, const Matrix& target, std::size_t rows = 0);
// Softmax cross-entropy; cot is softmax - onehot.
LossValue cross_entropy(std::span<const double> logits, int label);

// ---- optimizer ----

struct AdamState {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(const ModelParams& params);
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr);

// ---- per-sequence loss and gradients ----

// Loss of sequence i of the batch and, if grads is non-null, its gradient
// (overwritten).
double sequence_loss(const ModelParams& params, Scheme scheme, const SequenceBatch& b,
                     std::size_t i, Gradients* grads, const GradOptions& opts = {});
// Mean loss over the given sequences, gradients reduced in index order.
double batch_loss(const ModelParams& params, Scheme scheme, const SequenceBatch& b,
                  std::span<const std::size_t> idx, Gradients* grads, std::size_t workers,
                  const GradOptions& opts = {});

// ---- checkpoints ----

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  AdamState adam;
  std::string rng_state;
  std::uint64_t epoch = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<char>& bytes);

// ---- training / evaluation ----

struct Metrics {
  std::map<std::string, double> scalars;  // loss, accuracy | mse, mae
  Vec per_step_mse;                       // per-step targets only
};

Metrics evaluate(const ModelParams& params, Scheme scheme, const SequenceBatch& b,
                 std::size_t workers = 1);
Metrics evaluate(const Checkpoint& ckpt, const SequenceBatch& b);

struct MetricRow {
  std::uint64_t epoch;
  std::string split;
  std::string metric;
  double value;
};

struct TrainResult {
  Checkpoint best;   // best validation metric
  Checkpoint last;
  std::vector<MetricRow> log;
  std::size_t epochs_run = 0;
  double best_val = 0.0;
};

struct TrainHooks {
  std::function<void(const MetricRow&)> on_metric;
};

TrainResult train(const ModelConfig& config, const Dataset& data, const TrainHooks& hooks = {});

void write_metrics_csv(const std::vector<MetricRow>& log, const std::filesystem::path& path);
std::string metrics_csv(const std::vector<MetricRow>& log);

}  // namespace linoss
