#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "red/embedding.hpp"
#include "red/masking.hpp"
#include "red/model_config.hpp"
#include "red/numcore/checkpoint.hpp"
#include "red/numcore/layers.hpp"

namespace red {

/// Time-interval correlation 1 / ln(e + seconds/60).
double f_time(double seconds);
/// Distance-interval correlation 1 / ln(e + meters/1000).
double f_dist(double meters);

/// Token slot of a sequence layout: a step index, or kVirtualSlot for
/// [START]/[EXTRACT].
inline constexpr std::ptrdiff_t kVirtualSlot = -1;

struct IntervalMatrices {
  Tensor time_s;  // |t_i - t_j|
  Tensor dist_m;  // travel length between steps
};

/// Pairwise intervals over `layout`. Travel length between steps i < j is
/// half of each endpoint segment plus every segment strictly between them.
/// Rows and columns of virtual slots are zero.
IntervalMatrices interval_matrices(const PathTrajectory& traj, const RoadNetwork& net,
                                   std::span<const std::ptrdiff_t> layout);

/// Correlation values flattened to [n*n x 1] plus the real-pair mask.
struct BiasInputs {
  std::size_t n = 0;
  Tensor f_time;
  Tensor f_dist;
  Tensor real_pairs;  // [n x n], 1 where both slots are real steps
};

BiasInputs make_bias_inputs(const IntervalMatrices& intervals, std::span<const std::ptrdiff_t> layout);

enum class BiasMode { full, distance_only, none };

/// Scalar -> dim/2 -> scalar lift applied to every correlation value.
class BiasProjection {
 public:
  BiasProjection() = default;
  BiasProjection(nc::ParameterStore& store, const std::string& name, std::size_t dim, std::mt19937_64& rng);

  /// [n*n x 1] values -> [n x n] correlation matrix.
  Var operator()(const Tensor& flat_values, std::size_t n) const;

  nc::Linear lift;
  nc::Linear squash;
};

/// A^td = (1 - lambda2) A^t + lambda2 A^d with virtual rows/columns zeroed.
/// `distance_only` drops the A^t term.
Var bias_matrix(const BiasInputs& inputs, double lambda2, const BiasProjection& time_proj,
                const BiasProjection& dist_proj, BiasMode mode);

struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// Post-norm Transformer layer whose attention logits receive the
/// time-distance bias.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(nc::ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t heads,
                   std::size_t ffn, std::mt19937_64& rng);

  /// `allowed` is a row-major [n x n] attention mask (empty = all allowed).
  Var forward(const Var& x, const BiasInputs& bias, BiasMode mode, double lambda2, std::span<const char> allowed,
              ForwardContext& ctx) const;

  BiasProjection time_bias, dist_bias;

 private:
  std::size_t heads_ = 1;
  nc::Linear query_, key_, value_, out_;
  nc::LayerNorm norm1_, norm2_;
  nc::Linear ff1_, ff2_;
};

/// Lower-triangular [n x n] mask: position i attends to j <= i.
std::vector<char> causal_mask(std::size_t n);

/// Sinusoidal encodings for the given absolute positions.
Tensor positional_encoding(std::span<const std::size_t> positions, std::size_t dim);

/// Input-side switches used by fine-tuning protocols.
struct InputMode {
  bool use_user = true;
  bool strip_time = false;  // departure time only, no time-interval bias
  bool use_bias = true;

  BiasMode bias_mode() const {
    if (!use_bias) return BiasMode::none;
    return strip_time ? BiasMode::distance_only : BiasMode::full;
  }
};

struct EncoderOutput {
  Var hidden;             // [(k+2) x dim], layout <[START], key..., [EXTRACT]>
  Var trajectory_vector;  // [1 x dim], the [EXTRACT] row
};

struct PretrainOutput {
  EncoderOutput encoder;
  Var encoder_logits;  // [(k+1) x vocab], rows <[START], key...>
  Var decoder_hidden;  // [|T| x dim]
  Var decoder_logits;  // [|T| x vocab]
};

/// The full road-aware encoder-decoder: spatial/time/user embedding, causal
/// path encoder over key steps, bidirectional path decoder over the
/// unshuffled sequence, shared segment classifier.
class RedModel {
 public:
  RedModel(const ModelConfig& config, const RoadNetwork& net);
  RedModel(const RedModel&) = delete;
  RedModel& operator=(const RedModel&) = delete;
  RedModel(RedModel&&) = default;

  const ModelConfig& config() const noexcept { return config_; }
  const RoadNetwork& network() const noexcept { return *net_; }
  nc::ParameterStore& parameters() noexcept { return store_; }
  const nc::ParameterStore& parameters() const noexcept { return store_; }

  /// GAT output over all nodes, [(|V|+1) x dim].
  Var spatial_table() const;
  StepEmbedding embed(const PathTrajectory& traj, const Var& spatial, const InputMode& mode) const;

  /// Encoder tokens <[START], key steps..., [EXTRACT]> with positional encodings.
  Var encoder_tokens(const PathTrajectory& traj, const StepEmbedding& emb, std::span<const std::size_t> key,
                     const Var& spatial) const;
  Var run_encoder(const Var& tokens, const BiasInputs& bias, const InputMode& mode, ForwardContext& ctx) const;
  /// Mask-step inputs combined with encoder key states and unshuffled to
  /// original order.
  Var decoder_tokens(const PathTrajectory& traj, const StepEmbedding& emb, const MaskSplit& split,
                     const Var& encoder_hidden) const;
  Var run_decoder(const Var& tokens, const BiasInputs& bias, const InputMode& mode, ForwardContext& ctx) const;
  Var encoder_logits(const Var& encoder_hidden) const;
  Var decoder_logits(const Var& decoder_hidden) const;

  BiasInputs encoder_bias(const PathTrajectory& traj, std::span<const std::size_t> key) const;
  BiasInputs decoder_bias(const PathTrajectory& traj) const;

  EncoderOutput encode(const PathTrajectory& traj, std::span<const std::size_t> key, const Var& spatial,
                       const InputMode& mode, ForwardContext& ctx) const;
  PretrainOutput forward_pretrain(const PathTrajectory& traj, const MaskSplit& split, const Var& spatial,
                                  ForwardContext& ctx, const InputMode& mode = {}) const;
  /// Encoder over every step; returns the [EXTRACT] state as [1 x dim].
  Var represent(const PathTrajectory& traj, const Var& spatial, const InputMode& mode, ForwardContext& ctx) const;

  nc::CheckpointData to_checkpoint(const nlohmann::json& extra = {}) const;
  static RedModel from_checkpoint(const nc::CheckpointData& data, const RoadNetwork& net);

  /// Zeroes every time/distance bias projection.
  void zero_bias_projections();

 private:
  ModelConfig config_;
  const RoadNetwork* net_;
  nc::GraphAdjacency graph_;
  Tensor features_;
  nc::ParameterStore store_;
  GatStack gat_;
  TimeEncoder time_;
  UserTable users_;
  nc::ParameterPtr extract_token_, mask_token_;
  std::vector<TransformerLayer> encoder_, decoder_;
  nc::Linear head_, decoder_head_;
};

/// Read-only inference over a fixed model: the spatial table is computed once
/// and shared, so concurrent `represent` calls are safe.
class InferenceSession {
 public:
  explicit InferenceSession(const RedModel& model, InputMode mode = {});
  std::vector<double> represent(const PathTrajectory& traj) const;
  const RedModel& model() const noexcept { return *model_; }

 private:
  const RedModel* model_;
  InputMode mode_;
  Var spatial_;
};

}  // namespace red
