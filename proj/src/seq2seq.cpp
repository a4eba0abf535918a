#include "red/seq2seq.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "red/error.hpp"

namespace red {

void ModelConfig::validate() const {
  if (dim == 0 || dim % 4 != 0) throw ValidationError("dim must be a positive multiple of 4");
  if (heads == 0 || dim % heads != 0) throw ValidationError("dim must be divisible by the attention head count");
  if (encoder_layers == 0 || decoder_layers == 0) throw ValidationError("encoder and decoder need at least one layer");
  if (gat_heads.empty()) throw ValidationError("GAT needs at least one layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  if (!(lambda2 >= 0.0 && lambda2 <= 1.0)) throw ValidationError("lambda2 must lie in [0, 1]");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},
          {"heads", c.heads},
          {"gat_heads", c.gat_heads},
          {"ffn_dim", c.ffn_dim},
          {"dropout", c.dropout},
          {"lambda2", c.lambda2},
          {"tie_heads", c.tie_heads},
          {"mask_time_encoding", c.mask_time_encoding},
          {"num_segments", c.num_segments},
          {"num_users", c.num_users},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.dim = j.at("dim").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.gat_heads = j.at("gat_heads").get<std::vector<std::size_t>>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.lambda2 = j.at("lambda2").get<double>();
    c.tie_heads = j.at("tie_heads").get<bool>();
    c.mask_time_encoding = j.at("mask_time_encoding").get<bool>();
    c.num_segments = j.at("num_segments").get<std::size_t>();
    c.num_users = j.at("num_users").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

double f_time(double seconds) {
  if (!(seconds >= 0.0)) throw ContractViolation("time interval must be non-negative");
  return 1.0 / std::log(std::numbers::e + seconds / 60.0);
}

double f_dist(double meters) {
  if (!(meters >= 0.0)) throw ContractViolation("distance interval must be non-negative");
  return 1.0 / std::log(std::numbers::e + meters / 1000.0);
}

IntervalMatrices interval_matrices(const PathTrajectory& traj, const RoadNetwork& net,
                                   std::span<const std::ptrdiff_t> layout) {
  const auto n = traj.steps.size();
  std::vector<double> length(n), prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    length[i] = net.segment(traj.steps[i].segment).length_m;
    prefix[i + 1] = prefix[i] + length[i];
  }
  const auto m = layout.size();
  IntervalMatrices out{Tensor(m, m), Tensor(m, m)};
  for (std::size_t a = 0; a < m; ++a) {
    if (layout[a] == kVirtualSlot) continue;
    if (layout[a] < 0 || static_cast<std::size_t>(layout[a]) >= n) throw ContractViolation("layout slot out of range");
    for (std::size_t b = 0; b < m; ++b) {
      if (layout[b] == kVirtualSlot || a == b) continue;
      const auto i = static_cast<std::size_t>(std::min(layout[a], layout[b]));
      const auto j = static_cast<std::size_t>(std::max(layout[a], layout[b]));
      const auto ti = traj.steps[static_cast<std::size_t>(layout[a])].timestamp;
      const auto tj = traj.steps[static_cast<std::size_t>(layout[b])].timestamp;
      out.time_s(a, b) = static_cast<double>(ti > tj ? ti - tj : tj - ti);
      out.dist_m(a, b) = i == j ? 0.0 : length[i] / 2.0 + (prefix[j] - prefix[i + 1]) + length[j] / 2.0;
    }
  }
  return out;
}

BiasInputs make_bias_inputs(const IntervalMatrices& intervals, std::span<const std::ptrdiff_t> layout) {
  const auto n = layout.size();
  if (intervals.time_s.rows() != n || intervals.dist_m.rows() != n)
    throw ContractViolation("interval matrices do not match the layout");
  BiasInputs b{n, Tensor(n * n, 1), Tensor(n * n, 1), Tensor(n, n)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      b.f_time[r * n + c] = f_time(intervals.time_s(r, c));
      b.f_dist[r * n + c] = f_dist(intervals.dist_m(r, c));
      b.real_pairs(r, c) = layout[r] != kVirtualSlot && layout[c] != kVirtualSlot ? 1.0 : 0.0;
    }
  return b;
}

BiasProjection::BiasProjection(nc::ParameterStore& store, const std::string& name, std::size_t dim,
                               std::mt19937_64& rng)
    : lift(store, name + ".lift", 1, dim / 2, rng), squash(store, name + ".squash", dim / 2, 1, rng) {}

Var BiasProjection::operator()(const Tensor& flat_values, std::size_t n) const {
  const Var hidden = lift(Var::constant(flat_values));
  return nc::reshape(squash(hidden), n, n);
}

Var bias_matrix(const BiasInputs& in, double lambda2, const BiasProjection& time_proj,
                const BiasProjection& dist_proj, BiasMode mode) {
  if (!(lambda2 >= 0.0 && lambda2 <= 1.0)) throw ValidationError("lambda2 must lie in [0, 1]");
  if (mode == BiasMode::none) throw ContractViolation("bias_matrix called with bias disabled");
  const Var dist = nc::scale(dist_proj(in.f_dist, in.n), lambda2);
  Var combined = dist;
  if (mode == BiasMode::full) combined = nc::add(nc::scale(time_proj(in.f_time, in.n), 1.0 - lambda2), dist);
  return nc::mul(combined, Var::constant(in.real_pairs));
}

TransformerLayer::TransformerLayer(nc::ParameterStore& store, const std::string& prefix, std::size_t dim,
                                   std::size_t heads, std::size_t ffn, std::mt19937_64& rng)
    : time_bias(store, prefix + ".time_bias", dim, rng),
      dist_bias(store, prefix + ".dist_bias", dim, rng),
      heads_(heads),
      query_(store, prefix + ".query", dim, dim, rng),
      key_(store, prefix + ".key", dim, dim, rng),
      value_(store, prefix + ".value", dim, dim, rng),
      out_(store, prefix + ".out", dim, dim, rng),
      norm1_(store, prefix + ".norm1", dim),
      norm2_(store, prefix + ".norm2", dim),
      ff1_(store, prefix + ".ff1", dim, ffn, rng),
      ff2_(store, prefix + ".ff2", ffn, dim, rng) {}

Var TransformerLayer::forward(const Var& x, const BiasInputs& bias, BiasMode mode, double lambda2,
                              std::span<const char> allowed, ForwardContext& ctx) const {
  const auto dim = x.cols();
  const auto dh = dim / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  if (mode != BiasMode::none && bias.n != x.rows())
    throw ContractViolation("bias built for " + std::to_string(bias.n) + " tokens, sequence has " +
                            std::to_string(x.rows()));
  const Var q = query_(x), k = key_(x), v = value_(x);
  Var bias_term;
  if (mode != BiasMode::none) bias_term = bias_matrix(bias, lambda2, time_bias, dist_bias, mode);

  std::vector<Var> head_out;
  head_out.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Var scores = nc::scale(nc::matmul_nt(nc::slice_cols(q, h * dh, dh), nc::slice_cols(k, h * dh, dh)), inv_sqrt);
    if (bias_term.defined()) scores = nc::add(scores, bias_term);
    const Var weights = allowed.empty() ? nc::softmax_rows(scores) : nc::softmax_rows(scores, allowed);
    head_out.push_back(nc::matmul(weights, nc::slice_cols(v, h * dh, dh)));
  }
  Var attn = out_(heads_ == 1 ? head_out.front() : nc::concat_cols(head_out));
  if (ctx.training && ctx.dropout > 0) attn = nc::dropout(attn, ctx.dropout, *ctx.rng, true);
  const Var x1 = norm1_(nc::add(x, attn));
  Var ff = ff2_(nc::gelu(ff1_(x1)));
  if (ctx.training && ctx.dropout > 0) ff = nc::dropout(ff, ctx.dropout, *ctx.rng, true);
  return norm2_(nc::add(x1, ff));
}

std::vector<char> causal_mask(std::size_t n) {
  std::vector<char> m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m[i * n + j] = 1;
  return m;
}

Tensor positional_encoding(std::span<const std::size_t> positions, std::size_t dim) {
  Tensor pe(positions.size(), dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const auto pos = static_cast<double>(positions[r]);
    for (std::size_t c = 0; c < dim; c += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(c) / static_cast<double>(dim));
      pe(r, c) = std::sin(pos * freq);
      if (c + 1 < dim) pe(r, c + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

RedModel::RedModel(const ModelConfig& config, const RoadNetwork& net)
    : config_(config), net_(&net), graph_(spatial_adjacency(net)), features_(node_features(net)) {
  config_.validate();
  if (config_.num_segments != net.num_segments())
    throw ValidationError("model expects " + std::to_string(config_.num_segments) + " segments, network has " +
                          std::to_string(net.num_segments()));
  std::mt19937_64 rng(config_.seed);
  const auto dim = config_.dim;
  gat_ = GatStack(store_, "gat", kFeatureDim, dim, config_.gat_heads, rng);
  time_ = TimeEncoder(store_, "time", dim, rng);
  users_ = UserTable(store_, "user_table", config_.num_users, dim, rng);
  extract_token_ = store_.create("extract_token", nc::normal_init(1, dim, 0.02, rng));
  mask_token_ = store_.create("mask_token", nc::normal_init(1, dim, 0.02, rng));
  for (std::size_t i = 0; i < config_.encoder_layers; ++i)
    encoder_.emplace_back(store_, "encoder." + std::to_string(i), dim, config_.heads, config_.ffn_width(), rng);
  for (std::size_t i = 0; i < config_.decoder_layers; ++i)
    decoder_.emplace_back(store_, "decoder." + std::to_string(i), dim, config_.heads, config_.ffn_width(), rng);
  head_ = nc::Linear(store_, "head", dim, config_.vocab_size(), rng);
  if (!config_.tie_heads) decoder_head_ = nc::Linear(store_, "decoder_head", dim, config_.vocab_size(), rng);
}

Var RedModel::spatial_table() const { return gat_.forward(features_, graph_); }

StepEmbedding RedModel::embed(const PathTrajectory& traj, const Var& spatial, const InputMode& mode) const {
  return joint_embed(traj, *net_, spatial, time_, users_, {mode.use_user, mode.strip_time});
}

Var RedModel::encoder_tokens(const PathTrajectory& traj, const StepEmbedding& emb, std::span<const std::size_t> key,
                             const Var& spatial) const {
  if (key.empty()) throw ContractViolation("encoder needs at least one key step");
  const std::size_t start_row[] = {static_cast<std::size_t>(config_.num_segments)};
  const Var tokens =
      nc::concat_rows({nc::gather_rows(spatial, start_row), nc::gather_rows(emb.joint, key), extract_token_->var});
  std::vector<std::size_t> positions;
  positions.reserve(key.size() + 2);
  positions.push_back(0);
  for (auto k : key) positions.push_back(k + 1);
  positions.push_back(traj.steps.size() + 1);
  return nc::add(tokens, Var::constant(positional_encoding(positions, config_.dim)));
}

Var RedModel::run_encoder(const Var& tokens, const BiasInputs& bias, const InputMode& mode,
                          ForwardContext& ctx) const {
  const auto allowed = causal_mask(tokens.rows());
  Var x = ctx.training && ctx.dropout > 0 ? nc::dropout(tokens, ctx.dropout, *ctx.rng, true) : tokens;
  for (const auto& layer : encoder_) x = layer.forward(x, bias, mode.bias_mode(), config_.lambda2, allowed, ctx);
  return x;
}

Var RedModel::decoder_tokens(const PathTrajectory& traj, const StepEmbedding& emb, const MaskSplit& split,
                             const Var& encoder_hidden) const {
  const auto k = split.key.size();
  if (k + split.mask.size() != traj.steps.size())
    throw ContractViolation("key and mask sizes do not add up to the trajectory length");
  if (encoder_hidden.rows() != k + 2) throw ContractViolation("encoder output does not match the key set");
  std::vector<std::size_t> key_rows(k);
  std::iota(key_rows.begin(), key_rows.end(), std::size_t{1});
  const Var key_states = nc::gather_rows(encoder_hidden, key_rows);
  const auto order = unshuffle_order(split);
  if (split.mask.empty()) return nc::gather_rows(key_states, order);

  std::vector<std::size_t> positions(split.mask.size());
  for (std::size_t i = 0; i < split.mask.size(); ++i) positions[i] = split.mask[i] + 1;
  Var mask_in = Var::constant(positional_encoding(positions, config_.dim));
  if (config_.mask_time_encoding) mask_in = nc::add(nc::gather_rows(emb.time, split.mask), mask_in);
  mask_in = nc::add_rowvec(mask_in, mask_token_->var);
  return nc::gather_rows(nc::concat_rows({key_states, mask_in}), order);
}

Var RedModel::run_decoder(const Var& tokens, const BiasInputs& bias, const InputMode& mode,
                          ForwardContext& ctx) const {
  Var x = tokens;
  for (const auto& layer : decoder_) x = layer.forward(x, bias, mode.bias_mode(), config_.lambda2, {}, ctx);
  return x;
}

Var RedModel::encoder_logits(const Var& encoder_hidden) const {
  std::vector<std::size_t> rows(encoder_hidden.rows() - 1);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return head_(nc::gather_rows(encoder_hidden, rows));
}

Var RedModel::decoder_logits(const Var& decoder_hidden) const {
  return config_.tie_heads ? head_(decoder_hidden) : decoder_head_(decoder_hidden);
}

BiasInputs RedModel::encoder_bias(const PathTrajectory& traj, std::span<const std::size_t> key) const {
  std::vector<std::ptrdiff_t> layout;
  layout.reserve(key.size() + 2);
  layout.push_back(kVirtualSlot);
  for (auto k : key) layout.push_back(static_cast<std::ptrdiff_t>(k));
  layout.push_back(kVirtualSlot);
  return make_bias_inputs(interval_matrices(traj, *net_, layout), layout);
}

BiasInputs RedModel::decoder_bias(const PathTrajectory& traj) const {
  std::vector<std::ptrdiff_t> layout(traj.steps.size());
  std::iota(layout.begin(), layout.end(), std::ptrdiff_t{0});
  return make_bias_inputs(interval_matrices(traj, *net_, layout), layout);
}

EncoderOutput RedModel::encode(const PathTrajectory& traj, std::span<const std::size_t> key, const Var& spatial,
                               const InputMode& mode, ForwardContext& ctx) const {
  const auto emb = embed(traj, spatial, mode);
  const Var hidden = run_encoder(encoder_tokens(traj, emb, key, spatial), encoder_bias(traj, key), mode, ctx);
  const std::size_t last[] = {hidden.rows() - 1};
  return {hidden, nc::gather_rows(hidden, last)};
}

PretrainOutput RedModel::forward_pretrain(const PathTrajectory& traj, const MaskSplit& split, const Var& spatial,
                                          ForwardContext& ctx, const InputMode& mode) const {
  const auto emb = embed(traj, spatial, mode);
  PretrainOutput out;
  const Var hidden =
      run_encoder(encoder_tokens(traj, emb, split.key, spatial), encoder_bias(traj, split.key), mode, ctx);
  const std::size_t last[] = {hidden.rows() - 1};
  out.encoder = {hidden, nc::gather_rows(hidden, last)};
  out.encoder_logits = encoder_logits(hidden);
  out.decoder_hidden = run_decoder(decoder_tokens(traj, emb, split, hidden), decoder_bias(traj), mode, ctx);
  out.decoder_logits = decoder_logits(out.decoder_hidden);
  return out;
}

Var RedModel::represent(const PathTrajectory& traj, const Var& spatial, const InputMode& mode,
                        ForwardContext& ctx) const {
  std::vector<std::size_t> all(traj.steps.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return encode(traj, all, spatial, mode, ctx).trajectory_vector;
}

nc::CheckpointData RedModel::to_checkpoint(const nlohmann::json& extra) const {
  nc::CheckpointData data;
  data.meta = extra.is_object() ? extra : nlohmann::json::object();
  data.meta["model"] = to_json(config_);
  data.tensors = store_.snapshot();
  return data;
}

RedModel RedModel::from_checkpoint(const nc::CheckpointData& data, const RoadNetwork& net) {
  if (!data.meta.contains("model")) throw ValidationError("checkpoint has no model config");
  RedModel model(model_config_from_json(data.meta["model"]), net);
  model.store_.assign(data.tensors);
  return model;
}

void RedModel::zero_bias_projections() {
  for (auto* layers : {&encoder_, &decoder_})
    for (auto& layer : *layers)
      for (auto* proj : {&layer.time_bias, &layer.dist_bias})
        for (const auto& p : {proj->lift.weight, proj->lift.bias, proj->squash.weight, proj->squash.bias})
          p->value().fill(0.0);
}

InferenceSession::InferenceSession(const RedModel& model, InputMode mode) : model_(&model), mode_(mode) {
  nc::NoGradGuard no_grad;
  spatial_ = model.spatial_table();
}

std::vector<double> InferenceSession::represent(const PathTrajectory& traj) const {
  if (traj.steps.empty() || traj.steps.size() > kMaxTrajectorySteps)
    throw ValidationError("trajectory " + std::to_string(traj.id) + " has " + std::to_string(traj.steps.size()) +
                          " steps; expected [1, 256]");
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const auto& s = traj.steps[i];
    if (!model_->network().contains(s.segment))
      throw ValidationError("trajectory " + std::to_string(traj.id) + " references unknown segment " +
                            std::to_string(s.segment));
    if (i > 0 && s.timestamp < traj.steps[i - 1].timestamp)
      throw ValidationError("trajectory " + std::to_string(traj.id) + " has decreasing timestamps");
  }
  nc::NoGradGuard no_grad;
  ForwardContext ctx;
  const Var v = model_->represent(traj, spatial_, mode_, ctx);
  return {v.value().span().begin(), v.value().span().end()};
}

}  // namespace red
