#include "red/cli.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "red/error.hpp"
#include "red/evaluation.hpp"
#include "red/training.hpp"
#include "text_util.hpp"

namespace red::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kNetworkFile = "network.txt";
constexpr const char* kTrajectoryFile = "trajectories.jsonl";

struct Common {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

void add_common(CLI::App& cmd, Common& c) {
  cmd.add_option("--seed", c.seed, "Random seed");
  cmd.add_option("--threads", c.threads, "Worker thread cap")->check(CLI::PositiveNumber);
}

void section(std::ostream& out, std::string_view name) { out << '[' << name << "]\n"; }

template <typename T>
void field(std::ostream& out, std::string_view key, const T& value) {
  if constexpr (std::is_floating_point_v<T>)
    out << key << " = " << detail::format_exact(value) << '\n';
  else
    out << key << " = " << value << '\n';
}

struct Loaded {
  RoadNetwork net;
  TrajectoryDataset data;
};

Loaded load_data(const fs::path& dir, const UserVocabulary* vocab = nullptr) {
  Loaded l{load_network(dir / kNetworkFile), {}};
  l.data = load_trajectories(dir / kTrajectoryFile, l.net, vocab);
  return l;
}

void print_load_stats(std::ostream& out, const LoadStats& s) {
  section(out, "data");
  field(out, "records", s.records);
  field(out, "kept", s.kept);
  field(out, "too_short", s.too_short);
  field(out, "truncated", s.truncated);
  field(out, "unknown_segment", s.unknown_segment);
  field(out, "time_order", s.time_order);
  field(out, "malformed", s.malformed);
}

UserVocabulary vocabulary_of(const nc::CheckpointData& ckpt) {
  if (!ckpt.meta.contains("users")) return {};
  return UserVocabulary(ckpt.meta["users"].get<std::vector<std::int64_t>>());
}

struct ModelBundle {
  nc::CheckpointData ckpt;
  Loaded loaded;
  std::unique_ptr<RedModel> model;
};

ModelBundle load_model(const fs::path& checkpoint, const fs::path& data_dir) {
  ModelBundle b;
  b.ckpt = nc::load_checkpoint(checkpoint);
  const auto vocab = vocabulary_of(b.ckpt);
  b.loaded = load_data(data_dir, &vocab);
  b.model = std::make_unique<RedModel>(RedModel::from_checkpoint(b.ckpt, b.loaded.net));
  return b;
}

void write_embeddings(const fs::path& path, const Tensor& vectors, std::span<const PathTrajectory> trajs) {
  static_assert(std::endian::native == std::endian::little, "embedding files are little-endian");
  detail::write_atomically(path, [&](std::ostream& out) {
    const std::uint64_t header[2] = {vectors.rows(), vectors.cols()};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(vectors.span().data()),
              static_cast<std::streamsize>(vectors.size() * sizeof(double)));
  });
  auto ids = path;
  ids += ".ids";
  detail::write_atomically(ids, [&](std::ostream& out) {
    for (const auto& t : trajs) out << t.id << '\n';
  });
}

std::map<std::int64_t, std::int32_t> read_labels(const fs::path& path) {
  auto in = detail::open_input(path);
  std::map<std::int64_t, std::int32_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    const auto parts = detail::split(body, ',');
    const auto id = parts.size() == 2 ? detail::parse_number<std::int64_t>(parts[0]) : std::nullopt;
    const auto label = parts.size() == 2 ? detail::parse_number<std::int32_t>(parts[1]) : std::nullopt;
    if (!id || !label) throw ParseError(path.string(), line_no, "expected trajectory_id,label");
    labels[*id] = *label;
  }
  return labels;
}

std::vector<std::pair<std::int64_t, std::int64_t>> read_pairs(const fs::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    const auto parts = detail::split(body, ',');
    const auto a = parts.size() == 2 ? detail::parse_number<std::int64_t>(parts[0]) : std::nullopt;
    const auto b = parts.size() == 2 ? detail::parse_number<std::int64_t>(parts[1]) : std::nullopt;
    if (!a || !b) throw ParseError(path.string(), line_no, "expected query_id,candidate_id");
    pairs.emplace_back(*a, *b);
  }
  return pairs;
}

// Options shared by the training commands; each is applied only when given.
struct TrainFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::size_t> dim, encoder_layers, decoder_layers, heads, batch_size, epochs;
  std::optional<double> lr, lambda1, lambda2, mask_ratio, dropout;
  std::optional<std::string> mask_strategy, tie_heads;
  bool freeze_encoder = false;

  void add(CLI::App& cmd, bool model_shape) {
    cmd.add_option("--config", config_file, "key = value training config file")->check(CLI::ExistingFile);
    cmd.add_option("--set", sets, "Config override key=value (repeatable)");
    cmd.add_option("--epochs", epochs);
    cmd.add_option("--lr", lr);
    cmd.add_option("--batch-size", batch_size);
    if (model_shape) {
      cmd.add_option("--dim", dim);
      cmd.add_option("--encoder-layers", encoder_layers);
      cmd.add_option("--decoder-layers", decoder_layers);
      cmd.add_option("--heads", heads);
      cmd.add_option("--dropout", dropout);
      cmd.add_option("--lambda1", lambda1);
      cmd.add_option("--lambda2", lambda2);
      cmd.add_option("--mask-strategy", mask_strategy, "road-aware or random");
      cmd.add_option("--mask-ratio", mask_ratio, "Masked fraction for random masking");
      cmd.add_option("--tie-heads", tie_heads, "Share the encoder and decoder output head")
          ->check(CLI::IsMember({"on", "off"}));
    } else {
      cmd.add_flag("--freeze-encoder", freeze_encoder, "Train the task head only");
    }
  }

  TrainConfig resolve(TrainConfig base, const Common& common, const CLI::App& cmd) const {
    if (!config_file.empty()) base = load_train_config(config_file, base);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
      set_config_value(base, std::string(detail::trim(s.substr(0, eq))), std::string(detail::trim(s.substr(eq + 1))));
    }
    if (dim) base.model.dim = *dim;
    if (encoder_layers) base.model.encoder_layers = *encoder_layers;
    if (decoder_layers) base.model.decoder_layers = *decoder_layers;
    if (heads) base.model.heads = *heads;
    if (dropout) base.model.dropout = *dropout;
    if (lambda1) base.lambda1 = *lambda1;
    if (lambda2) base.model.lambda2 = *lambda2;
    if (mask_strategy) base.mask_strategy = parse_mask_strategy(*mask_strategy);
    if (mask_ratio) base.mask_ratio = *mask_ratio;
    if (tie_heads) base.model.tie_heads = *tie_heads == "on";
    if (epochs) base.epochs = *epochs;
    if (lr) base.lr = *lr;
    if (batch_size) base.batch_size = *batch_size;
    if (freeze_encoder) base.freeze_encoder = true;
    if (cmd.count("--seed")) base.seed = common.seed;
    if (cmd.count("--threads")) base.threads = common.threads;
    base.validate();
    return base;
  }
};

TrainConfig config_from_checkpoint(const nc::CheckpointData& ckpt) {
  TrainConfig cfg;
  if (ckpt.meta.contains("train_config")) {
    std::istringstream in(ckpt.meta["train_config"].get<std::string>());
    cfg = read_train_config(in);
  }
  cfg.model = model_config_from_json(ckpt.meta.at("model"));
  return cfg;
}

// Fine-tuning has its own batch, epoch and lr defaults unless overridden.
TrainConfig finetune_defaults(const nc::CheckpointData& ckpt) {
  TrainConfig cfg = config_from_checkpoint(ckpt);
  cfg.batch_size = 64;
  cfg.epochs = 30;
  cfg.lr = 1e-4;
  return cfg;
}

void save_finetuned(const fs::path& path, const RedModel& model, const TaskHead& head, nlohmann::json meta) {
  auto data = model.to_checkpoint(std::move(meta));
  for (const auto& [name, t] : head.store.snapshot()) data.tensors.emplace(name, t);
  nc::save_checkpoint(path, data);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Road-aware trajectory representation learning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // generate
  Common gen_common;
  std::string grid = "8x8", gen_out;
  std::size_t gen_traj = 500;
  int gen_users = 10;
  auto* generate = app.add_subcommand("generate", "Write a synthetic grid network and trajectories");
  add_common(*generate, gen_common);
  generate->add_option("--grid", grid, "Intersections as ROWSxCOLS");
  generate->add_option("--traj", gen_traj, "Number of trajectories");
  generate->add_option("--users", gen_users, "Number of users");
  generate->add_option("--out", gen_out, "Output directory")->required();

  // pretrain
  Common pre_common;
  std::string pre_data, pre_out;
  TrainFlags pre_flags;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Dual-objective pretraining");
  add_common(*pretrain_cmd, pre_common);
  pretrain_cmd->add_option("--data", pre_data, "Directory with network.txt and trajectories.jsonl")->required();
  pretrain_cmd->add_option("--out", pre_out, "Checkpoint directory")->required();
  pre_flags.add(*pretrain_cmd, true);

  // finetune-cls / finetune-tte
  Common cls_common, tte_common;
  std::string cls_ckpt, cls_data, cls_labels, cls_out, tte_ckpt, tte_data, tte_out;
  TrainFlags cls_flags, tte_flags;
  auto* cls = app.add_subcommand("finetune-cls", "Fine-tune trajectory classification");
  add_common(*cls, cls_common);
  cls->add_option("--checkpoint", cls_ckpt)->required()->check(CLI::ExistingFile);
  cls->add_option("--data", cls_data)->required();
  cls->add_option("--labels", cls_labels, "trajectory_id,label file; default labels are users")
      ->check(CLI::ExistingFile);
  cls->add_option("--out", cls_out, "Write the fine-tuned checkpoint here");
  cls_flags.add(*cls, false);
  auto* tte = app.add_subcommand("finetune-tte", "Fine-tune travel time estimation");
  add_common(*tte, tte_common);
  tte->add_option("--checkpoint", tte_ckpt)->required()->check(CLI::ExistingFile);
  tte->add_option("--data", tte_data)->required();
  tte->add_option("--out", tte_out, "Write the fine-tuned checkpoint here");
  tte_flags.add(*tte, false);

  // embed
  Common emb_common;
  std::string emb_ckpt, emb_data, emb_out;
  bool emb_raw = false;
  auto* embed = app.add_subcommand("embed", "Write trajectory vectors");
  add_common(*embed, emb_common);
  embed->add_option("--checkpoint", emb_ckpt)->required()->check(CLI::ExistingFile);
  embed->add_option("--data", emb_data)->required();
  embed->add_option("--out", emb_out, "Binary matrix; ids go to <out>.ids")->required();
  embed->add_flag("--raw", emb_raw, "Skip L2 normalization");

  // evaluate
  Common ev_common;
  std::string ev_ckpt, ev_data, ev_task = "retrieval", ev_measure = "hausdorff";
  std::size_t ev_queries = 100, ev_database = 1000;
  double ev_p = 0.1, ev_eps = 100.0;
  std::vector<std::size_t> ev_k = {1, 5, 10};
  auto* evaluate = app.add_subcommand("evaluate", "Retrieval or similarity evaluation");
  add_common(*evaluate, ev_common);
  evaluate->add_option("--checkpoint", ev_ckpt)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", ev_data)->required();
  evaluate->add_option("--task", ev_task, "retrieval or similarity")
      ->check(CLI::IsMember({"retrieval", "similarity"}));
  evaluate->add_option("--queries", ev_queries);
  evaluate->add_option("--database", ev_database);
  evaluate->add_option("--p", ev_p, "Downsampling rate for retrieval twins");
  evaluate->add_option("--measure", ev_measure, "Ground-truth measure for similarity");
  evaluate->add_option("--eps", ev_eps, "LCSS/EDR match threshold in meters");
  evaluate->add_option("--k", ev_k, "Cut-offs for HR@k")->delimiter(',');

  // simbench
  Common sim_common;
  std::string sim_data, sim_measure = "dtw", sim_pairs;
  double sim_eps = 100.0, sim_gap_x = 0.0, sim_gap_y = 0.0;
  std::size_t sim_limit = 20;
  auto* simbench = app.add_subcommand("simbench", "Heuristic similarity scores between trajectories");
  add_common(*simbench, sim_common);
  simbench->add_option("--data", sim_data)->required();
  simbench->add_option("--measure", sim_measure);
  simbench->add_option("--eps", sim_eps);
  simbench->add_option("--gap-x", sim_gap_x);
  simbench->add_option("--gap-y", sim_gap_y);
  simbench->add_option("--pairs-file", sim_pairs, "query_id,candidate_id lines")->check(CLI::ExistingFile);
  simbench->add_option("--limit", sim_limit, "Without a pairs file, score all pairs of the first N trajectories");

  // config
  Common cfg_common;
  bool dump = false;
  TrainFlags cfg_flags;
  auto* config = app.add_subcommand("config", "Show the resolved training config");
  add_common(*config, cfg_common);
  config->add_flag("--dump", dump, "Print every key with its value")->required();
  cfg_flags.add(*config, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (*generate) {
      GeneratorConfig g;
      const auto x = grid.find('x');
      const auto rows = x == std::string::npos ? std::nullopt : detail::parse_number<int>(grid.substr(0, x));
      const auto cols = x == std::string::npos ? std::nullopt : detail::parse_number<int>(grid.substr(x + 1));
      if (!rows || !cols) throw ValidationError("--grid expects ROWSxCOLS, got '" + grid + "'");
      g.grid_rows = *rows;
      g.grid_cols = *cols;
      g.n_trajectories = gen_traj;
      g.n_users = gen_users;
      g.seed = gen_common.seed;
      section(out, "config");
      field(out, "grid", grid);
      field(out, "traj", gen_traj);
      field(out, "users", gen_users);
      field(out, "seed", g.seed);
      field(out, "out", gen_out);
      const auto data = generate_synthetic(g);
      fs::create_directories(gen_out);
      save_network(fs::path(gen_out) / kNetworkFile, data.network);
      save_trajectories(fs::path(gen_out) / kTrajectoryFile, data.trajectories, data.users);
      section(out, "result");
      field(out, "segments", data.network.num_segments());
      field(out, "edges", data.network.edges().size());
      field(out, "trajectories", data.trajectories.size());
      return 0;
    }

    if (*config) {
      const auto cfg = cfg_flags.resolve({}, cfg_common, *config);
      write_train_config(out, cfg);
      return 0;
    }

    if (*pretrain_cmd) {
      const auto cfg = pre_flags.resolve({}, pre_common, *pretrain_cmd);
      section(out, "config");
      field(out, "data", pre_data);
      field(out, "out", pre_out);
      write_train_config(out, cfg);
      const auto loaded = load_data(pre_data);
      print_load_stats(out, loaded.data.stats);
      std::ostringstream cfg_text;
      write_train_config(cfg_text, cfg);
      PretrainHooks hooks;
      hooks.checkpoint_dir = fs::path(pre_out);
      hooks.checkpoint_meta["users"] = loaded.data.users.raw_ids();
      hooks.checkpoint_meta["train_config"] = cfg_text.str();
      section(out, "epochs");
      hooks.on_epoch = [&](const EpochLog& log) {
        out << "epoch = " << log.epoch;
        if (log.train) out << " train_total = " << detail::format_exact(log.train->total);
        out << " val_nsp = " << detail::format_exact(log.validation.nsp)
            << " val_tr = " << detail::format_exact(log.validation.tr)
            << " val_total = " << detail::format_exact(log.validation.total)
            << " nsp_accuracy = " << detail::format_exact(log.nsp_accuracy) << '\n'
            << std::flush;
      };
      const auto result = pretrain(loaded.data.trajectories, loaded.net, cfg, hooks);
      section(out, "result");
      field(out, "checkpoint", (fs::path(pre_out) / "best.ckpt").string());
      field(out, "val_total_epoch0", result.history.front().validation.total);
      field(out, "val_total_final", result.history.back().validation.total);
      return 0;
    }

    if (*cls) {
      auto b = load_model(cls_ckpt, cls_data);
      const auto cfg = cls_flags.resolve(finetune_defaults(b.ckpt), cls_common, *cls);
      section(out, "config");
      field(out, "checkpoint", cls_ckpt);
      field(out, "data", cls_data);
      field(out, "labels", cls_labels.empty() ? std::string("users") : cls_labels);
      write_train_config(out, cfg);
      std::vector<PathTrajectory> trajs;
      std::vector<std::int32_t> labels;
      std::size_t classes = 0;
      if (cls_labels.empty()) {
        for (const auto& t : b.loaded.data.trajectories)
          if (t.user != kUnknownUser) {
            trajs.push_back(t);
            labels.push_back(t.user);
          }
        classes = b.model->config().num_users;
      } else {
        const auto table = read_labels(cls_labels);
        for (const auto& t : b.loaded.data.trajectories)
          if (const auto it = table.find(t.id); it != table.end()) {
            trajs.push_back(t);
            labels.push_back(it->second);
            classes = std::max(classes, static_cast<std::size_t>(std::max(it->second, 0)) + 1);
          }
      }
      auto result = finetune_classification(*b.model, trajs, labels, classes, cls_labels.empty(), cfg);
      section(out, "metrics");
      const auto& m = result.metrics;
      field(out, "classes", m.classes);
      if (m.classes == 2) {
        field(out, "accuracy", m.accuracy);
        field(out, "precision", m.precision);
        field(out, "recall", m.recall);
        field(out, "f1", m.f1);
      } else {
        field(out, "micro_f1", m.micro_f1);
        field(out, "macro_f1", m.macro_f1);
        field(out, "recall_at_5", m.recall_at_5);
      }
      if (!cls_out.empty()) save_finetuned(cls_out, *b.model, result.head, b.ckpt.meta);
      return 0;
    }

    if (*tte) {
      auto b = load_model(tte_ckpt, tte_data);
      const auto cfg = tte_flags.resolve(finetune_defaults(b.ckpt), tte_common, *tte);
      section(out, "config");
      field(out, "checkpoint", tte_ckpt);
      field(out, "data", tte_data);
      write_train_config(out, cfg);
      auto result = finetune_tte(*b.model, b.loaded.data.trajectories, cfg);
      section(out, "metrics");
      field(out, "mae_min", result.metrics.mae);
      field(out, "mape_pct", result.metrics.mape);
      field(out, "rmse_min", result.metrics.rmse);
      field(out, "count", result.metrics.count);
      field(out, "mape_excluded", result.metrics.mape_excluded);
      if (!tte_out.empty()) save_finetuned(tte_out, *b.model, result.head, b.ckpt.meta);
      return 0;
    }

    if (*embed) {
      auto b = load_model(emb_ckpt, emb_data);
      section(out, "config");
      field(out, "checkpoint", emb_ckpt);
      field(out, "data", emb_data);
      field(out, "out", emb_out);
      field(out, "normalize", emb_raw ? "false" : "true");
      field(out, "threads", emb_common.threads);
      const auto& trajs = b.loaded.data.trajectories;
      const auto vectors = embed_dataset(*b.model, trajs, {}, !emb_raw, emb_common.threads);
      write_embeddings(emb_out, vectors, trajs);
      section(out, "result");
      field(out, "rows", vectors.rows());
      field(out, "dim", vectors.cols());
      return 0;
    }

    if (*evaluate) {
      auto b = load_model(ev_ckpt, ev_data);
      auto trajs = b.loaded.data.trajectories;
      std::mt19937_64 rng(ev_common.seed);
      std::shuffle(trajs.begin(), trajs.end(), rng);
      if (ev_queries == 0 || ev_queries + ev_database > trajs.size())
        throw ValidationError("need " + std::to_string(ev_queries + ev_database) + " trajectories, dataset has " +
                              std::to_string(trajs.size()));
      const std::span<const PathTrajectory> queries(trajs.data(), ev_queries);
      const std::span<const PathTrajectory> database(trajs.data() + ev_queries, ev_database);
      section(out, "config");
      field(out, "checkpoint", ev_ckpt);
      field(out, "data", ev_data);
      field(out, "task", ev_task);
      field(out, "queries", ev_queries);
      field(out, "database", ev_database);
      field(out, "seed", ev_common.seed);
      if (ev_task == "retrieval") {
        field(out, "p", ev_p);
        const auto setup = make_retrieval_setup(queries, database, ev_p, ev_common.seed);
        const auto q = embed_dataset(*b.model, setup.queries, {}, true, ev_common.threads);
        const auto d = embed_dataset(*b.model, setup.database, {}, true, ev_common.threads);
        const auto report = retrieval_mean_rank(q, d, setup.targets);
        section(out, "metrics");
        field(out, "mean_rank", report.mean_rank);
        field(out, "evaluated", report.evaluated);
        field(out, "missing", report.missing);
      } else {
        const auto measure = parse_measure(ev_measure);
        field(out, "measure", to_string(measure));
        field(out, "eps", ev_eps);
        std::vector<PointSeq> qs, ds;
        for (const auto& t : queries) qs.push_back(traj_to_pointseq(t, b.loaded.net));
        for (const auto& t : database) ds.push_back(traj_to_pointseq(t, b.loaded.net));
        const std::size_t kmax = *std::max_element(ev_k.begin(), ev_k.end());
        MeasureParams params;
        params.eps = ev_eps;
        const auto truth = topk_by_measure(qs, ds, measure, kmax, params, ev_common.threads);
        const auto q = embed_dataset(*b.model, queries, {}, true, ev_common.threads);
        const auto d = embed_dataset(*b.model, database, {}, true, ev_common.threads);
        const auto pred = topk_by_embedding(q, d, kmax);
        section(out, "metrics");
        for (auto k : ev_k) field(out, "hr@" + std::to_string(k), hit_ratio(truth, pred, k));
      }
      return 0;
    }

    if (*simbench) {
      const auto net = load_network(fs::path(sim_data) / kNetworkFile);
      const auto data = load_trajectories(fs::path(sim_data) / kTrajectoryFile, net);
      const auto measure = parse_measure(sim_measure);
      MeasureParams params;
      params.eps = sim_eps;
      params.gap = {sim_gap_x, sim_gap_y};
      std::map<std::int64_t, std::size_t> index;
      std::vector<PointSeq> seqs;
      for (const auto& t : data.trajectories) {
        index.emplace(t.id, seqs.size());
        seqs.push_back(traj_to_pointseq(t, net));
      }
      std::vector<std::pair<std::int64_t, std::int64_t>> id_pairs;
      if (!sim_pairs.empty()) {
        id_pairs = read_pairs(sim_pairs);
      } else {
        const auto n = std::min(sim_limit, data.trajectories.size());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j)
            id_pairs.emplace_back(data.trajectories[i].id, data.trajectories[j].id);
      }
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      for (const auto& [a, c] : id_pairs) {
        const auto ia = index.find(a), ic = index.find(c);
        if (ia == index.end() || ic == index.end())
          throw ValidationError("pair (" + std::to_string(a) + ", " + std::to_string(c) + ") names an unknown trajectory");
        pairs.emplace_back(ia->second, ic->second);
      }
      const auto scores = pairwise_scores(measure, seqs, pairs, params, sim_common.threads);
      err << "measure = " << to_string(measure) << ", eps = " << detail::format_exact(params.eps)
          << ", pairs = " << pairs.size() << '\n';
      out << "query_id,candidate_id,score\n";
      for (std::size_t k = 0; k < pairs.size(); ++k)
        out << id_pairs[k].first << ',' << id_pairs[k].second << ',' << detail::format_exact(scores[k]) << '\n';
      return 0;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const UnsupportedOperation& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed checkpoint metadata: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace red::cli
