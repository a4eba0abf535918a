#include "red/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "parallel.hpp"
#include "red/error.hpp"
#include "text_util.hpp"

namespace red {

void TrainConfig::validate() const {
  model.validate();
  if (!(lambda1 >= 0.0 && lambda1 <= 1.0)) throw ValidationError("lambda1 must lie in [0, 1]");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be non-negative");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw ValidationError("mask ratio must lie in [0, 1]");
  if (threads == 0) throw ValidationError("threads must be positive");
  split_sizes(0, split_ratios);
}

namespace {

std::string join(const auto& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
      out += detail::format_exact(v);
    else
      out += std::to_string(v);
  }
  return out;
}

template <typename T>
T number(const std::string& key, std::string_view text) {
  const auto v = detail::parse_number<T>(detail::trim(text));
  if (!v) throw ValidationError("config key '" + key + "': cannot parse '" + std::string(text) + "'");
  return *v;
}

bool boolean(const std::string& key, std::string_view text) {
  text = detail::trim(text);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + std::string(text) + "'");
}

}  // namespace

void write_train_config(std::ostream& out, const TrainConfig& c) {
  const auto& m = c.model;
  out << "dim = " << m.dim << '\n'
      << "encoder_layers = " << m.encoder_layers << '\n'
      << "decoder_layers = " << m.decoder_layers << '\n'
      << "heads = " << m.heads << '\n'
      << "gat_heads = " << join(m.gat_heads) << '\n'
      << "ffn_dim = " << m.ffn_width() << '\n'
      << "dropout = " << detail::format_exact(m.dropout) << '\n'
      << "lambda1 = " << detail::format_exact(c.lambda1) << '\n'
      << "lambda2 = " << detail::format_exact(m.lambda2) << '\n'
      << "tie_heads = " << (m.tie_heads ? "true" : "false") << '\n'
      << "mask_time_encoding = " << (m.mask_time_encoding ? "true" : "false") << '\n'
      << "lr = " << detail::format_exact(c.lr) << '\n'
      << "weight_decay = " << detail::format_exact(c.weight_decay) << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "epochs = " << c.epochs << '\n'
      << "seed = " << c.seed << '\n'
      << "mask_strategy = " << to_string(c.mask_strategy) << '\n'
      << "mask_ratio = " << detail::format_exact(c.mask_ratio) << '\n'
      << "split = " << join(c.split_ratios) << '\n'
      << "freeze_encoder = " << (c.freeze_encoder ? "true" : "false") << '\n'
      << "threads = " << c.threads << '\n';
}

void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  auto& m = c.model;
  if (key == "dim") m.dim = number<std::size_t>(key, value);
  else if (key == "encoder_layers") m.encoder_layers = number<std::size_t>(key, value);
  else if (key == "decoder_layers") m.decoder_layers = number<std::size_t>(key, value);
  else if (key == "heads") m.heads = number<std::size_t>(key, value);
  else if (key == "gat_heads") {
    m.gat_heads.clear();
    for (auto part : detail::split(value, ',')) m.gat_heads.push_back(number<std::size_t>(key, part));
  } else if (key == "ffn_dim") m.ffn_dim = number<std::size_t>(key, value);
  else if (key == "dropout") m.dropout = number<double>(key, value);
  else if (key == "lambda1") c.lambda1 = number<double>(key, value);
  else if (key == "lambda2") m.lambda2 = number<double>(key, value);
  else if (key == "tie_heads") m.tie_heads = boolean(key, value);
  else if (key == "mask_time_encoding") m.mask_time_encoding = boolean(key, value);
  else if (key == "lr") c.lr = number<double>(key, value);
  else if (key == "weight_decay") c.weight_decay = number<double>(key, value);
  else if (key == "batch_size") c.batch_size = number<std::size_t>(key, value);
  else if (key == "epochs") c.epochs = number<std::size_t>(key, value);
  else if (key == "seed") c.seed = number<std::uint64_t>(key, value);
  else if (key == "mask_strategy") c.mask_strategy = parse_mask_strategy(detail::trim(value));
  else if (key == "mask_ratio") c.mask_ratio = number<double>(key, value);
  else if (key == "split") {
    const auto parts = detail::split(value, ',');
    if (parts.size() != 3) throw ValidationError("config key 'split' needs three comma-separated ratios");
    for (std::size_t i = 0; i < 3; ++i) c.split_ratios[i] = number<double>(key, parts[i]);
  } else if (key == "freeze_encoder") c.freeze_encoder = boolean(key, value);
  else if (key == "threads") c.threads = number<std::size_t>(key, value);
  else throw ValidationError("unknown config key '" + key + "'");
}

TrainConfig read_train_config(std::istream& in, TrainConfig base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError("config", line_no, "expected key = value");
    const std::string key(detail::trim(body.substr(0, eq)));
    try {
      set_config_value(base, key, std::string(detail::trim(body.substr(eq + 1))));
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError("config", line_no, e.what());
    }
  }
  return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  auto in = detail::open_input(path);
  return read_train_config(in, std::move(base));
}

LossReport make_loss_report(double nsp, double tr, double lambda1) {
  return {nsp, tr, lambda1 * nsp + (1.0 - lambda1) * tr};
}

std::vector<std::int32_t> nsp_targets(const PathTrajectory& traj, const MaskSplit& split, const ModelConfig& cfg) {
  std::vector<std::int32_t> t;
  t.reserve(split.key.size() + 1);
  for (auto k : split.key) t.push_back(traj.steps.at(k).segment);
  t.push_back(cfg.end_token());
  return t;
}

std::vector<std::int32_t> tr_targets(const PathTrajectory& traj) {
  std::vector<std::int32_t> t;
  t.reserve(traj.steps.size());
  for (const auto& s : traj.steps) t.push_back(s.segment);
  return t;
}

namespace {

Var batch_mean_ce(std::span<const Var> logits, std::span<const std::vector<std::int32_t>> targets) {
  if (logits.size() != targets.size())
    throw ContractViolation(std::to_string(logits.size()) + " logit blocks for " + std::to_string(targets.size()) +
                            " target lists");
  if (logits.empty()) throw ContractViolation("empty batch");
  Var total;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const Var ce = nc::cross_entropy(logits[i], targets[i]);
    total = total.defined() ? nc::add(total, ce) : ce;
  }
  return nc::scale(total, 1.0 / static_cast<double>(logits.size()));
}

Var mix(const Var& nsp, const Var& tr, double lambda1) {
  return nc::add(nc::scale(nsp, lambda1), nc::scale(tr, 1.0 - lambda1));
}

std::size_t argmax_row(const Tensor& t, std::size_t r) {
  const double* row = t.row_ptr(r);
  return static_cast<std::size_t>(std::max_element(row, row + t.cols()) - row);
}

std::vector<PathTrajectory> gather(std::span<const PathTrajectory> all, std::span<const std::size_t> idx) {
  std::vector<PathTrajectory> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string describe(const LossReport& r) {
  std::ostringstream s;
  s << "nsp=" << r.nsp << " tr=" << r.tr << " total=" << r.total;
  return s.str();
}

}  // namespace

Var nsp_loss(std::span<const Var> encoder_logits, std::span<const std::vector<std::int32_t>> targets) {
  return batch_mean_ce(encoder_logits, targets);
}

Var tr_loss(std::span<const Var> decoder_logits, std::span<const std::vector<std::int32_t>> targets) {
  return batch_mean_ce(decoder_logits, targets);
}

MaskSplit make_split(const PathTrajectory& traj, const RoadNetwork& net, const MaskThresholds& th,
                     const TrainConfig& cfg) {
  if (cfg.mask_strategy == MaskStrategy::road_aware) return road_aware_split(traj, net, th);
  return random_split(traj, net, cfg.mask_ratio, mix_seed(cfg.seed, static_cast<std::uint64_t>(traj.id)));
}

LossReport pretrain_step(RedModel& model, std::span<const PathTrajectory> batch, std::span<const MaskSplit> splits,
                         const TrainConfig& cfg, std::mt19937_64& rng, bool apply_update) {
  if (batch.size() != splits.size()) throw ContractViolation("one mask split per trajectory expected");
  auto& store = model.parameters();
  store.zero_grad();
  const Var spatial = model.spatial_table();
  ForwardContext ctx{true, model.config().dropout, &rng};
  std::vector<Var> enc, dec;
  std::vector<std::vector<std::int32_t>> enc_t, dec_t;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto out = model.forward_pretrain(batch[i], splits[i], spatial, ctx);
    enc.push_back(out.encoder_logits);
    dec.push_back(out.decoder_logits);
    enc_t.push_back(nsp_targets(batch[i], splits[i], model.config()));
    dec_t.push_back(tr_targets(batch[i]));
  }
  const Var nsp = nsp_loss(enc, enc_t);
  const Var tr = tr_loss(dec, dec_t);
  const auto report = make_loss_report(nsp.value().item(), tr.value().item(), cfg.lambda1);
  if (!std::isfinite(report.total)) throw TrainingDiverged("non-finite loss (" + describe(report) + ")");
  if (apply_update) {
    nc::backward(mix(nsp, tr, cfg.lambda1));
    nc::adamw_step(store.all(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  }
  return report;
}

ValidationResult validate_pretraining(const RedModel& model, std::span<const PathTrajectory> trajectories,
                                      const MaskThresholds& th, const TrainConfig& cfg) {
  if (trajectories.empty()) throw ValidationError("no validation trajectories");
  nc::NoGradGuard outer;
  const Var spatial = model.spatial_table();
  const auto n = trajectories.size();
  std::vector<double> nsp(n), tr(n);
  std::vector<std::size_t> correct(n), positions(n);
  detail::parallel_chunks(n, cfg.threads, [&](std::size_t begin, std::size_t end) {
    nc::NoGradGuard no_grad;
    ForwardContext ctx;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& traj = trajectories[i];
      const auto split = make_split(traj, model.network(), th, cfg);
      const auto out = model.forward_pretrain(traj, split, spatial, ctx);
      const auto nt = nsp_targets(traj, split, model.config());
      const auto tt = tr_targets(traj);
      nsp[i] = nc::cross_entropy(out.encoder_logits, nt).value().item();
      tr[i] = nc::cross_entropy(out.decoder_logits, tt).value().item();
      for (std::size_t r = 0; r < nt.size(); ++r)
        correct[i] += argmax_row(out.encoder_logits.value(), r) == static_cast<std::size_t>(nt[r]) ? 1 : 0;
      positions[i] = nt.size();
    }
  });
  const auto inv = 1.0 / static_cast<double>(n);
  ValidationResult result;
  result.loss = make_loss_report(std::accumulate(nsp.begin(), nsp.end(), 0.0) * inv,
                                 std::accumulate(tr.begin(), tr.end(), 0.0) * inv, cfg.lambda1);
  result.nsp_accuracy = static_cast<double>(std::accumulate(correct.begin(), correct.end(), std::size_t{0})) /
                        static_cast<double>(std::accumulate(positions.begin(), positions.end(), std::size_t{0}));
  return result;
}

PretrainResult pretrain(std::span<const PathTrajectory> dataset, const RoadNetwork& net, const TrainConfig& cfg,
                        const PretrainHooks& hooks) {
  cfg.validate();
  if (dataset.empty()) throw ValidationError("no trajectories to pretrain on");
  for (const auto& t : dataset) validate_trajectory(t, net);

  ModelConfig mcfg = cfg.model;
  mcfg.num_segments = net.num_segments();
  mcfg.seed = cfg.seed;
  for (const auto& t : dataset)
    if (t.user != kUnknownUser) mcfg.num_users = std::max(mcfg.num_users, static_cast<std::size_t>(t.user) + 1);

  auto split = split_dataset(dataset.size(), cfg.split_ratios, cfg.seed);
  if (split.train.empty()) throw ValidationError("train split is empty");
  const auto train = gather(dataset, split.train);
  const auto validation = split.validation.empty() ? train : gather(dataset, split.validation);
  const auto th = compute_thresholds(train, net);

  std::vector<MaskSplit> masks;
  masks.reserve(train.size());
  for (const auto& t : train) masks.push_back(make_split(t, net, th, cfg));

  PretrainResult result{RedModel(mcfg, net), {}, th, std::move(split)};
  auto& model = result.model;
  std::mt19937_64 order_rng(mix_seed(cfg.seed, 1));
  std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 2));

  nlohmann::json meta = hooks.checkpoint_meta;
  meta["thresholds"] = {{"mean_gps_points", th.mean_gps_points}, {"mean_length_m", th.mean_length_m}};
  double best = std::numeric_limits<double>::infinity();
  const auto log_epoch = [&](EpochLog log) {
    if (hooks.checkpoint_dir) {
      std::filesystem::create_directories(*hooks.checkpoint_dir);
      meta["epoch"] = log.epoch;
      meta["validation_total"] = log.validation.total;
      const auto data = model.to_checkpoint(meta);
      nc::save_checkpoint(*hooks.checkpoint_dir / "last.ckpt", data);
      if (log.validation.total < best) nc::save_checkpoint(*hooks.checkpoint_dir / "best.ckpt", data);
    }
    best = std::min(best, log.validation.total);
    if (hooks.on_epoch) hooks.on_epoch(log);
    result.history.push_back(std::move(log));
  };

  {
    const auto start = std::chrono::steady_clock::now();
    const auto v = validate_pretraining(model, validation, th, cfg);
    log_epoch({0, std::nullopt, v.loss, v.nsp_accuracy,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), order_rng);
    double nsp_sum = 0, tr_sum = 0;
    std::size_t seen = 0, batch_id = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batch_id) {
      const auto end = std::min(order.size(), b + cfg.batch_size);
      std::vector<PathTrajectory> batch;
      std::vector<MaskSplit> batch_masks;
      for (std::size_t i = b; i < end; ++i) {
        batch.push_back(train[order[i]]);
        batch_masks.push_back(masks[order[i]]);
      }
      LossReport r;
      try {
        r = pretrain_step(model, batch, batch_masks, cfg, dropout_rng);
      } catch (const TrainingDiverged& e) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch " << batch_id << ", lr " << cfg.lr << ": "
            << e.what();
        throw TrainingDiverged(msg.str());
      }
      nsp_sum += r.nsp * static_cast<double>(batch.size());
      tr_sum += r.tr * static_cast<double>(batch.size());
      seen += batch.size();
    }
    const auto inv = 1.0 / static_cast<double>(seen);
    const auto v = validate_pretraining(model, validation, th, cfg);
    log_epoch({epoch, make_loss_report(nsp_sum * inv, tr_sum * inv, cfg.lambda1), v.loss, v.nsp_accuracy,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
  }
  return result;
}

TaskHead::TaskHead(std::size_t dim, std::size_t outputs, InputMode input_mode, std::uint64_t seed) : mode(input_mode) {
  std::mt19937_64 rng(seed);
  linear = nc::Linear(store, "task_head", dim, outputs, rng);
}

Var TaskHead::operator()(const RedModel& model, const PathTrajectory& traj, const Var& spatial,
                         ForwardContext& ctx) const {
  return linear(model.represent(traj, spatial, mode, ctx));
}

namespace {

const std::vector<std::size_t>& held_out(const DatasetSplit& split) {
  if (!split.test.empty()) return split.test;
  if (!split.validation.empty()) return split.validation;
  return split.train;
}

// Shared fine-tuning loop. `loss` maps the batch outputs [B x outputs] and the
// batch sample indices to a scalar.
std::vector<double> run_finetune(RedModel& model, TaskHead& head, std::span<const PathTrajectory> trajectories,
                                 std::span<const std::size_t> train, const TrainConfig& cfg,
                                 const std::function<Var(const Var&, std::span<const std::size_t>)>& loss) {
  std::mt19937_64 order_rng(mix_seed(cfg.seed, 3));
  std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 4));
  const nc::AdamWConfig opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

  // A frozen encoder never changes, so its trajectory vectors are computed once.
  std::vector<Tensor> frozen;
  if (cfg.freeze_encoder) {
    nc::NoGradGuard no_grad;
    const Var spatial = model.spatial_table();
    ForwardContext ctx;
    for (auto i : train) frozen.push_back(model.represent(trajectories[i], spatial, head.mode, ctx).value());
  }
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double sum = 0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto end = std::min(order.size(), b + cfg.batch_size);
      head.store.zero_grad();
      model.parameters().zero_grad();
      std::vector<Var> rows;
      std::vector<std::size_t> samples;
      if (cfg.freeze_encoder) {
        for (std::size_t i = b; i < end; ++i) rows.push_back(head.linear(Var::constant(frozen[order[i]])));
      } else {
        const Var spatial = model.spatial_table();
        ForwardContext ctx{true, model.config().dropout, &dropout_rng};
        for (std::size_t i = b; i < end; ++i) rows.push_back(head(model, trajectories[train[order[i]]], spatial, ctx));
      }
      for (std::size_t i = b; i < end; ++i) samples.push_back(train[order[i]]);
      const Var l = loss(nc::concat_rows(rows), samples);
      const double value = l.value().item();
      if (!std::isfinite(value))
        throw TrainingDiverged("fine-tuning diverged at epoch " + std::to_string(epoch + 1) + ", lr " +
                               detail::format_exact(cfg.lr));
      nc::backward(l);
      std::vector<nc::ParameterPtr> touched(head.store.all().begin(), head.store.all().end());
      if (!cfg.freeze_encoder)
        for (const auto& p : model.parameters().all()) {
          const auto& node = *p->var.node();
          if (node.has_grad() && std::any_of(node.grad.span().begin(), node.grad.span().end(),
                                             [](double g) { return g != 0.0; }))
            touched.push_back(p);
        }
      nc::adamw_step(touched, opt);
      sum += value * static_cast<double>(end - b);
      seen += end - b;
    }
    history.push_back(seen ? sum / static_cast<double>(seen) : 0.0);
  }
  return history;
}

}  // namespace

ClassificationResult finetune_classification(RedModel& model, std::span<const PathTrajectory> trajectories,
                                             std::span<const std::int32_t> labels, std::size_t n_classes,
                                             bool labels_are_users, const TrainConfig& cfg) {
  cfg.validate();
  if (n_classes < 2) throw ValidationError("classification needs at least two classes");
  if (labels.size() != trajectories.size()) throw ValidationError("one label per trajectory expected");
  if (trajectories.empty()) throw ValidationError("no trajectories to fine-tune on");
  for (auto l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes)
      throw ValidationError("label " + std::to_string(l) + " outside [0, " + std::to_string(n_classes) + ")");
  if (std::all_of(labels.begin(), labels.end(), [&](auto l) { return l == labels.front(); }))
    throw ValidationError("labels contain a single class");

  InputMode mode;
  mode.use_user = !labels_are_users;
  ClassificationResult result{TaskHead(model.config().dim, n_classes, mode, mix_seed(cfg.seed, 5)), {}, {}};
  const auto split = split_dataset(trajectories.size(), cfg.split_ratios, cfg.seed);
  result.train_loss = run_finetune(model, result.head, trajectories, split.train, cfg,
                                   [&](const Var& logits, std::span<const std::size_t> samples) {
                                     std::vector<std::int32_t> t;
                                     for (auto i : samples) t.push_back(labels[i]);
                                     return nc::cross_entropy(logits, t);
                                   });
  const auto& eval = held_out(split);
  const auto eval_trajs = gather(trajectories, eval);
  std::vector<std::int32_t> eval_labels;
  for (auto i : eval) eval_labels.push_back(labels[i]);
  result.metrics = classification_metrics(predict(model, result.head, eval_trajs), eval_labels);
  return result;
}

double travel_time_minutes(const PathTrajectory& traj) {
  if (traj.steps.empty()) throw ValidationError("empty trajectory has no travel time");
  return static_cast<double>(traj.steps.back().timestamp - traj.steps.front().timestamp) / 60.0;
}

RegressionResult finetune_tte(RedModel& model, std::span<const PathTrajectory> trajectories, const TrainConfig& cfg) {
  cfg.validate();
  if (trajectories.empty()) throw ValidationError("no trajectories to fine-tune on");
  InputMode mode;
  mode.strip_time = true;
  RegressionResult result{TaskHead(model.config().dim, 1, mode, mix_seed(cfg.seed, 6)), {}, {}};
  std::vector<double> target(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) target[i] = travel_time_minutes(trajectories[i]);
  const auto split = split_dataset(trajectories.size(), cfg.split_ratios, cfg.seed);

  // Start the regression from the mean training target.
  double mean = 0;
  for (auto i : split.train) mean += target[i];
  if (!split.train.empty()) result.head.linear.bias->value().fill(mean / static_cast<double>(split.train.size()));

  result.train_loss = run_finetune(model, result.head, trajectories, split.train, cfg,
                                   [&](const Var& pred, std::span<const std::size_t> samples) {
                                     Tensor t(samples.size(), 1);
                                     for (std::size_t k = 0; k < samples.size(); ++k) t[k] = target[samples[k]];
                                     return nc::mse_loss(pred, t);
                                   });
  const auto& eval = held_out(split);
  const auto pred = predict(model, result.head, gather(trajectories, eval));
  std::vector<double> p, t;
  for (std::size_t k = 0; k < eval.size(); ++k) {
    p.push_back(pred[k]);
    t.push_back(target[eval[k]]);
  }
  result.metrics = regression_metrics(p, t);
  return result;
}

Tensor predict(const RedModel& model, const TaskHead& head, std::span<const PathTrajectory> trajectories) {
  nc::NoGradGuard no_grad;
  const Var spatial = model.spatial_table();
  ForwardContext ctx;
  Tensor out(trajectories.size(), head.linear.out_features());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Var row = head(model, trajectories[i], spatial, ctx);
    std::copy(row.value().span().begin(), row.value().span().end(), out.row_ptr(i));
  }
  return out;
}

}  // namespace red
