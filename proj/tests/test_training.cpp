#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "red/error.hpp"
#include "red/training.hpp"
#include "support.hpp"

using namespace red;

namespace {

TrainConfig micro_config() {
  TrainConfig cfg;
  cfg.model.dim = 8;
  cfg.model.encoder_layers = 1;
  cfg.model.decoder_layers = 1;
  cfg.model.heads = 2;
  cfg.model.gat_heads = {2, 1};
  cfg.model.ffn_dim = 16;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  return cfg;
}

SyntheticData small_data(std::size_t n = 40) {
  GeneratorConfig g;
  g.grid_rows = 3;
  g.grid_cols = 3;
  g.n_trajectories = n;
  g.n_users = 3;
  g.max_steps = 12;
  g.seed = 8;
  return generate_synthetic(g);
}

long double row_ce(const Tensor& logits, std::size_t r, std::int32_t target) {
  long double z = 0;
  for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(static_cast<long double>(logits(r, c)));
  return std::log(z) - logits(r, static_cast<std::size_t>(target));
}

double grad_norm(const nc::ParameterPtr& p) {
  double s = 0;
  for (double g : p->grad().span()) s += g * g;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("loss arithmetic") {
  SUBCASE("uniform logits over eight classes") {
    const std::vector<Var> logits{Var::constant(Tensor(3, 8))};
    const std::vector<std::vector<std::int32_t>> targets{{0, 5, 7}};
    CHECK(nsp_loss(logits, targets).value().item() == doctest::Approx(std::log(8.0)).epsilon(1e-14));
    CHECK(tr_loss(logits, targets).value().item() == doctest::Approx(std::log(8.0)).epsilon(1e-14));
  }
  SUBCASE("perfect logits") {
    Tensor t(2, 4);
    t(0, 1) = 1000;
    t(1, 3) = 1000;
    const std::vector<Var> logits{Var::constant(t)};
    const std::vector<std::vector<std::int32_t>> targets{{1, 3}};
    CHECK(nsp_loss(logits, targets).value().item() <= 1e-12);
  }
  SUBCASE("two trajectories of unequal length average per trajectory") {
    const Tensor a{{0.5, -1.0, 2.0}, {0.0, 0.3, -0.2}};
    const Tensor b{{1.0, 1.0, 0.0}, {-2.0, 0.5, 0.5}, {0.1, 0.2, 0.3}};
    const std::vector<Var> logits{Var::constant(a), Var::constant(b)};
    const std::vector<std::vector<std::int32_t>> targets{{2, 1}, {0, 1, 2}};
    const long double ma = (row_ce(a, 0, 2) + row_ce(a, 1, 1)) / 2;
    const long double mb = (row_ce(b, 0, 0) + row_ce(b, 1, 1) + row_ce(b, 2, 2)) / 3;
    const double expected = static_cast<double>((ma + mb) / 2);
    CHECK(std::abs(tr_loss(logits, targets).value().item() - expected) <= 1e-12);
    const double pooled = static_cast<double>((2 * ma + 3 * mb) / 5);
    CHECK(std::abs(expected - pooled) > 1e-3);
  }
  SUBCASE("count mismatch") {
    const std::vector<Var> logits{Var::constant(Tensor(2, 3))};
    const std::vector<std::vector<std::int32_t>> targets{{0, 1}, {1, 1}};
    CHECK_THROWS_AS(nsp_loss(logits, targets), ContractViolation);
  }
  SUBCASE("lambda1 mixing") {
    CHECK(make_loss_report(2.0, 3.0, 1.0).total == 2.0);
    CHECK(make_loss_report(2.0, 3.0, 0.0).total == 3.0);
    const auto r = make_loss_report(2.0, 3.0, 0.1);
    CHECK(r.total == 0.1 * 2.0 + 0.9 * 3.0);
  }
}

TEST_CASE("targets") {
  const auto traj = test::path({4, 7, 1, 9});
  ModelConfig cfg;
  cfg.num_segments = 10;
  const MaskSplit split{{0, 2}, {1, 3}};
  CHECK(nsp_targets(traj, split, cfg) == std::vector<std::int32_t>{4, 1, 11});
  CHECK(tr_targets(traj) == std::vector<std::int32_t>{4, 7, 1, 9});
}

TEST_CASE("train config text") {
  TrainConfig cfg;
  cfg.lambda1 = 0.25;
  cfg.model.gat_heads = {4, 2};
  cfg.mask_strategy = MaskStrategy::random;
  cfg.mask_ratio = 0.7;
  cfg.split_ratios = {0.7, 0.2, 0.1};
  cfg.model.tie_heads = false;
  std::stringstream buf;
  write_train_config(buf, cfg);
  const auto back = read_train_config(buf);
  std::stringstream again;
  write_train_config(again, back);
  buf.clear();
  buf.seekg(0);
  CHECK(again.str() == buf.str());
  CHECK(back.lambda1 == 0.25);
  CHECK(back.model.gat_heads == std::vector<std::size_t>{4, 2});
  CHECK(back.mask_strategy == MaskStrategy::random);
  CHECK_FALSE(back.model.tie_heads);

  std::stringstream defaults;
  write_train_config(defaults, TrainConfig{});
  const auto text = defaults.str();
  CHECK(text.find("dim = 128\n") != std::string::npos);
  CHECK(text.find("lambda1 = 0.1\n") != std::string::npos);
  CHECK(text.find("lambda2 = 0.5\n") != std::string::npos);

  std::istringstream unknown("# comment\n\ndim = 16\nwidth = 3\n");
  try {
    read_train_config(unknown);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  std::istringstream bad_value("lr = fast\n");
  CHECK_THROWS_AS(read_train_config(bad_value), ParseError);
  std::istringstream no_equals("lr 0.1\n");
  CHECK_THROWS_AS(read_train_config(no_equals), ParseError);

  TrainConfig c;
  set_config_value(c, "epochs", "3");
  CHECK(c.epochs == 3);
  c.lambda1 = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("pretraining") {
  const auto data = small_data();
  auto cfg = micro_config();

  SUBCASE("seeded runs are identical") {
    const auto a = pretrain(data.trajectories, data.network, cfg);
    const auto b = pretrain(data.trajectories, data.network, cfg);
    REQUIRE(a.history.size() == 2);
    CHECK_FALSE(a.history[0].train.has_value());
    CHECK(a.history[1].train->total == b.history[1].train->total);
    CHECK(a.history[1].validation.total == b.history[1].validation.total);
    CHECK(a.model.parameters().snapshot() == b.model.parameters().snapshot());
    for (const auto& log : a.history) {
      CHECK(log.validation.total == make_loss_report(log.validation.nsp, log.validation.tr, cfg.lambda1).total);
      CHECK(std::isfinite(log.validation.total));
    }
  }
  SUBCASE("one step reaches every parameter group") {
    const auto th = compute_thresholds(data.trajectories, data.network);
    ModelConfig mcfg = cfg.model;
    mcfg.num_segments = data.network.num_segments();
    mcfg.num_users = data.users.size();
    RedModel model(mcfg, data.network);
    std::vector<PathTrajectory> batch(data.trajectories.begin(), data.trajectories.begin() + 8);
    std::vector<MaskSplit> splits;
    for (const auto& t : batch) splits.push_back(make_split(t, data.network, th, cfg));
    std::mt19937_64 rng(1);
    const auto before = model.parameters().snapshot();
    const auto report = pretrain_step(model, batch, splits, cfg, rng);
    CHECK(report.total == make_loss_report(report.nsp, report.tr, cfg.lambda1).total);
    for (const char* prefix : {"gat.", "time.", "user_table", "encoder.0.query", "decoder.0.ff2", "encoder.0.time_bias",
                               "encoder.0.dist_bias", "decoder.0.time_bias", "decoder.0.dist_bias", "mask_token", "head"}) {
      CAPTURE(prefix);
      double norm = 0;
      for (const auto& p : model.parameters().all())
        if (p->name.rfind(prefix, 0) == 0) norm += grad_norm(p);
      CHECK(norm > 0);
    }
    CHECK(model.parameters().snapshot() != before);
  }
  SUBCASE("checkpoints and hooks") {
    const auto dir = std::filesystem::temp_directory_path() / "red_training_ckpt";
    std::filesystem::remove_all(dir);
    PretrainHooks hooks;
    hooks.checkpoint_dir = dir;
    hooks.checkpoint_meta = {{"tag", "x"}};
    std::size_t calls = 0;
    hooks.on_epoch = [&](const EpochLog&) { ++calls; };
    cfg.epochs = 2;
    const auto result = pretrain(data.trajectories, data.network, cfg, hooks);
    CHECK(calls == 3);
    CHECK(std::filesystem::exists(dir / "last.ckpt"));
    CHECK(std::filesystem::exists(dir / "best.ckpt"));
    const auto last = nc::load_checkpoint(dir / "last.ckpt");
    CHECK(last.meta["tag"] == "x");
    CHECK(last.meta["epoch"] == 2);
    CHECK(last.tensors == result.model.parameters().snapshot());
    std::filesystem::remove_all(dir);
  }
  SUBCASE("invalid input") {
    cfg.lr = 0;
    CHECK_THROWS_AS(pretrain(data.trajectories, data.network, cfg), ValidationError);
    cfg = micro_config();
    CHECK_THROWS_AS(pretrain(std::vector<PathTrajectory>{}, data.network, cfg), ValidationError);
    auto shortened = data.trajectories;
    shortened[0].steps.resize(3);
    CHECK_THROWS_AS(pretrain(shortened, data.network, cfg), ValidationError);
  }
}

TEST_CASE("fine-tuning") {
  const auto data = small_data(60);
  auto cfg = micro_config();
  cfg.epochs = 2;
  ModelConfig mcfg = cfg.model;
  mcfg.num_segments = data.network.num_segments();
  mcfg.num_users = data.users.size();

  SUBCASE("classification") {
    RedModel model(mcfg, data.network);
    std::vector<std::int32_t> labels;
    for (const auto& t : data.trajectories) labels.push_back(t.user);
    const auto r = finetune_classification(model, data.trajectories, labels, data.users.size(), true, cfg);
    CHECK(r.metrics.classes == data.users.size());
    CHECK(r.train_loss.size() == 2);
    CHECK(std::isfinite(r.train_loss.back()));
    CHECK_FALSE(r.head.mode.use_user);

    const std::vector<std::int32_t> same(data.trajectories.size(), 1);
    CHECK_THROWS_AS(finetune_classification(model, data.trajectories, same, 3, false, cfg), ValidationError);
    CHECK_THROWS_AS(finetune_classification(model, data.trajectories, labels, 1, false, cfg), ValidationError);
    auto out_of_range = labels;
    out_of_range[0] = 7;
    CHECK_THROWS_AS(finetune_classification(model, data.trajectories, out_of_range, 3, false, cfg), ValidationError);
  }
  SUBCASE("frozen encoder leaves the model untouched") {
    RedModel model(mcfg, data.network);
    const auto before = model.parameters().snapshot();
    std::vector<std::int32_t> labels;
    for (const auto& t : data.trajectories) labels.push_back(t.user);
    cfg.freeze_encoder = true;
    finetune_classification(model, data.trajectories, labels, data.users.size(), true, cfg);
    CHECK(model.parameters().snapshot() == before);
  }
  SUBCASE("travel time") {
    CHECK(travel_time_minutes(test::path({0, 1, 2, 3, 4})) == 2.0);
    RedModel model(mcfg, data.network);
    const auto r = finetune_tte(model, data.trajectories, cfg);
    CHECK(r.head.mode.strip_time);
    CHECK(r.metrics.count > 0);
    CHECK(std::isfinite(r.metrics.rmse));
  }
  SUBCASE("stripped time hides all but the departure") {
    RedModel model(mcfg, data.network);
    InputMode mode;
    mode.strip_time = true;
    const TaskHead head(mcfg.dim, 1, mode, 3);
    auto traj = data.trajectories[0];
    const std::vector<PathTrajectory> original{traj};
    std::vector<std::int64_t> later;
    for (std::size_t i = 1; i < traj.steps.size(); ++i) later.push_back(traj.steps[i].timestamp);
    std::mt19937_64 rng(2);
    std::shuffle(later.begin(), later.end(), rng);
    for (std::size_t i = 1; i < traj.steps.size(); ++i) traj.steps[i].timestamp = later[i - 1] + 3600 * static_cast<std::int64_t>(i);
    const std::vector<PathTrajectory> permuted{traj};
    CHECK(predict(model, head, original) == predict(model, head, permuted));

    InputMode full;
    const TaskHead timed(mcfg.dim, 1, full, 3);
    CHECK(predict(model, timed, original) != predict(model, timed, permuted));
  }
}
