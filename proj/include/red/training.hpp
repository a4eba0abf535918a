#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "red/evaluation.hpp"
#include "red/masking.hpp"
#include "red/seq2seq.hpp"

namespace red {

struct TrainConfig {
  ModelConfig model;
  double lambda1 = 0.1;
  double lr = 1e-4;
  double weight_decay = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  MaskStrategy mask_strategy = MaskStrategy::road_aware;
  double mask_ratio = 0.5;  // random masking only
  std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
  bool freeze_encoder = false;
  std::size_t threads = 1;

  void validate() const;
};

/// Flat `key = value` text, one entry per line, `#` comments.
void write_train_config(std::ostream& out, const TrainConfig& cfg);
/// Applies the entries of `in` on top of `base`. Unknown keys are rejected.
TrainConfig read_train_config(std::istream& in, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
/// Applies one `key=value` override.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

struct LossReport {
  double nsp = 0.0;
  double tr = 0.0;
  double total = 0.0;
};

/// total = lambda1 * nsp + (1 - lambda1) * tr.
LossReport make_loss_report(double nsp, double tr, double lambda1);

/// Raised when a loss turns non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Encoder targets: the key segments followed by [END].
std::vector<std::int32_t> nsp_targets(const PathTrajectory& traj, const MaskSplit& split, const ModelConfig& cfg);
/// Decoder targets: every segment of the trajectory.
std::vector<std::int32_t> tr_targets(const PathTrajectory& traj);

/// Mean cross-entropy per trajectory, then mean over the batch.
Var nsp_loss(std::span<const Var> encoder_logits, std::span<const std::vector<std::int32_t>> targets);
Var tr_loss(std::span<const Var> decoder_logits, std::span<const std::vector<std::int32_t>> targets);

/// Fixed per-trajectory mask under the configured strategy.
MaskSplit make_split(const PathTrajectory& traj, const RoadNetwork& net, const MaskThresholds& th,
                     const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;  // 0 is the untrained model
  std::optional<LossReport> train;
  LossReport validation;
  double nsp_accuracy = 0.0;  // top-1 over validation encoder positions
  double seconds = 0.0;
};

struct ValidationResult {
  LossReport loss;
  double nsp_accuracy = 0.0;
};

/// Per-trajectory mean losses and top-1 NSP accuracy without dropout.
ValidationResult validate_pretraining(const RedModel& model, std::span<const PathTrajectory> trajectories,
                                      const MaskThresholds& th, const TrainConfig& cfg);

struct PretrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  /// When set, `last.ckpt` is written after every epoch and `best.ckpt`
  /// whenever the validation total improves.
  std::optional<std::filesystem::path> checkpoint_dir;
  nlohmann::json checkpoint_meta = nlohmann::json::object();
};

struct PretrainResult {
  RedModel model;
  std::vector<EpochLog> history;
  MaskThresholds thresholds;
  DatasetSplit split;
};

/// Dual-objective pretraining on the train split, validated each epoch.
PretrainResult pretrain(std::span<const PathTrajectory> dataset, const RoadNetwork& net, const TrainConfig& cfg,
                        const PretrainHooks& hooks = {});

/// One optimizer step on `batch`; returns the batch loss report.
LossReport pretrain_step(RedModel& model, std::span<const PathTrajectory> batch, std::span<const MaskSplit> splits,
                         const TrainConfig& cfg, std::mt19937_64& rng, bool apply_update = true);

/// Linear head on the trajectory vector.
struct TaskHead {
  nc::ParameterStore store;
  nc::Linear linear;
  InputMode mode;

  TaskHead(std::size_t dim, std::size_t outputs, InputMode mode, std::uint64_t seed);
  TaskHead(TaskHead&&) = default;

  Var operator()(const RedModel& model, const PathTrajectory& traj, const Var& spatial, ForwardContext& ctx) const;
};

struct ClassificationResult {
  TaskHead head;
  ClassificationMetrics metrics;  // on the held-out split
  std::vector<double> train_loss;  // per epoch
};

/// Fine-tunes a linear classifier (and the encoder unless frozen). When
/// `labels_are_users` the user encoding is left out of the inputs.
ClassificationResult finetune_classification(RedModel& model, std::span<const PathTrajectory> trajectories,
                                             std::span<const std::int32_t> labels, std::size_t n_classes,
                                             bool labels_are_users, const TrainConfig& cfg);

/// (last timestamp - first timestamp) / 60.
double travel_time_minutes(const PathTrajectory& traj);

struct RegressionResult {
  TaskHead head;
  RegressionMetrics metrics;
  std::vector<double> train_loss;
};

/// Travel-time regression with time information stripped except departure.
RegressionResult finetune_tte(RedModel& model, std::span<const PathTrajectory> trajectories, const TrainConfig& cfg);

/// Scores [n x outputs] from a fine-tuned head, no dropout.
Tensor predict(const RedModel& model, const TaskHead& head, std::span<const PathTrajectory> trajectories);

}  // namespace red
