#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "red/error.hpp"
#include "red/seq2seq.hpp"
#include "support.hpp"

using namespace red;

namespace {

ModelConfig micro(const RoadNetwork& net, std::size_t dim = 8) {
  ModelConfig c;
  c.dim = dim;
  c.encoder_layers = 2;
  c.decoder_layers = 1;
  c.heads = 2;
  c.gat_heads = {2, 1};
  c.dropout = 0.0;
  c.num_segments = net.num_segments();
  c.num_users = 2;
  c.seed = 3;
  return c;
}

const Tensor& param(const nc::ParameterStore& s, const std::string& name) { return s.at(name)->value(); }

Tensor affine_ref(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = oracle::matmul(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b[j];
  return y;
}

Tensor layer_norm_ref(const Tensor& x, const Tensor& g, const Tensor& b) {
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) mu += x(i, j);
    mu /= static_cast<double>(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = (x(i, j) - mu) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return y;
}

double gelu_ref(double x) { return 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x))); }

/// Scalar lift -> squash applied to one correlation value.
double projection_ref(const nc::ParameterStore& s, const std::string& name, double f) {
  const auto& w1 = param(s, name + ".lift.weight");
  const auto& b1 = param(s, name + ".lift.bias");
  const auto& w2 = param(s, name + ".squash.weight");
  double out = param(s, name + ".squash.bias")[0];
  for (std::size_t k = 0; k < w1.cols(); ++k) out += (f * w1[k] + b1[k]) * w2[k];
  return out;
}

/// Post-norm layer with additive time-distance bias, written out by hand.
Tensor transformer_layer_ref(const nc::ParameterStore& s, const std::string& p, const Tensor& x, std::size_t heads,
                             const BiasInputs& bias, double lambda2, bool causal) {
  const std::size_t n = x.rows(), dim = x.cols(), dh = dim / heads;
  const auto q = affine_ref(x, param(s, p + ".query.weight"), param(s, p + ".query.bias"));
  const auto k = affine_ref(x, param(s, p + ".key.weight"), param(s, p + ".key.bias"));
  const auto v = affine_ref(x, param(s, p + ".value.weight"), param(s, p + ".value.bias"));
  Tensor concat(n, dim);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> w(n, 0.0);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        if (causal && j > i) continue;
        double score = 0;
        for (std::size_t c = 0; c < dh; ++c) score += q(i, h * dh + c) * k(j, h * dh + c);
        score /= std::sqrt(static_cast<double>(dh));
        if (bias.real_pairs(i, j) != 0) {
          score += (1 - lambda2) * projection_ref(s, p + ".time_bias", bias.f_time[i * n + j]) +
                   lambda2 * projection_ref(s, p + ".dist_bias", bias.f_dist[i * n + j]);
        }
        w[j] = score;
        mx = std::max(mx, score);
      }
      double z = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (causal && j > i) continue;
        w[j] = std::exp(w[j] - mx);
        z += w[j];
      }
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < dh; ++c) concat(i, h * dh + c) += w[j] / z * v(j, h * dh + c);
    }
  auto attn = affine_ref(concat, param(s, p + ".out.weight"), param(s, p + ".out.bias"));
  for (std::size_t i = 0; i < attn.size(); ++i) attn[i] += x[i];
  const auto x1 = layer_norm_ref(attn, param(s, p + ".norm1.gamma"), param(s, p + ".norm1.beta"));
  auto hidden = affine_ref(x1, param(s, p + ".ff1.weight"), param(s, p + ".ff1.bias"));
  for (auto& h : hidden.span()) h = gelu_ref(h);
  auto ff = affine_ref(hidden, param(s, p + ".ff2.weight"), param(s, p + ".ff2.bias"));
  for (std::size_t i = 0; i < ff.size(); ++i) ff[i] += x1[i];
  return layer_norm_ref(ff, param(s, p + ".norm2.gamma"), param(s, p + ".norm2.beta"));
}

void randomize(nc::ParameterStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& p : store.all())
    for (auto& v : p->value().span()) v = u(rng);
}

}  // namespace

TEST_CASE("interval correlation functions") {
  CHECK(f_time(0) == 1.0);
  CHECK(f_time(60) == doctest::Approx(0.76147).epsilon(1e-5));
  CHECK(std::abs(f_time(3600) - 1.0 / std::log(std::exp(1.0) + 60.0)) <= 1e-15);
  CHECK(std::abs(f_time(3600) - 0.2416) <= 1e-4);
  CHECK(f_dist(0) == 1.0);
  CHECK(f_dist(1000) == doctest::Approx(0.76147).epsilon(1e-5));
  CHECK(f_dist(500) > f_dist(5000));
  CHECK_THROWS_AS(f_time(-1), ContractViolation);
  CHECK_THROWS_AS(f_dist(-0.5), ContractViolation);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    for (double v : {f_time(lo), f_dist(lo)}) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
    if (lo < hi) {
      CHECK(f_time(lo) > f_time(hi));
      CHECK(f_dist(lo) > f_dist(hi));
    }
  }
}

TEST_CASE("interval matrices") {
  const auto net = test::chain({100, 200, 300});
  auto traj = test::path({0, 1, 2});
  traj.steps[0].timestamp = 100;
  traj.steps[1].timestamp = 160;
  traj.steps[2].timestamp = 400;
  const std::vector<std::ptrdiff_t> layout{kVirtualSlot, 0, 1, 2, kVirtualSlot};
  const auto m = interval_matrices(traj, net, layout);
  CHECK(m.time_s(1, 2) == 60.0);
  CHECK(m.time_s(3, 1) == 300.0);
  CHECK(m.dist_m(1, 3) == 400.0);
  CHECK(m.dist_m(1, 2) == 150.0);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(m.time_s(i, i) == 0.0);
    CHECK(m.dist_m(i, i) == 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(m.time_s(i, j) == m.time_s(j, i));
      CHECK(m.dist_m(i, j) == m.dist_m(j, i));
    }
    CHECK(m.time_s(0, i) == 0.0);
    CHECK(m.dist_m(i, 4) == 0.0);
  }
  const auto b = make_bias_inputs(m, layout);
  CHECK(b.real_pairs(0, 1) == 0.0);
  CHECK(b.real_pairs(1, 3) == 1.0);
  CHECK(b.f_dist[1 * 5 + 3] == f_dist(400));
}

TEST_CASE("bias matrix") {
  const auto net = test::chain({100, 200, 300});
  const auto traj = test::path({0, 1, 2});
  const std::vector<std::ptrdiff_t> layout{kVirtualSlot, 0, 1, 2};
  const auto in = make_bias_inputs(interval_matrices(traj, net, layout), layout);
  std::mt19937_64 rng(2);
  nc::ParameterStore store;
  const BiasProjection tp(store, "t", 4, rng), dp(store, "d", 4, rng);
  randomize(store, 5);

  const auto at = bias_matrix(in, 0.0, tp, dp, BiasMode::full).value();
  const auto raw = tp(in.f_time, in.n).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(at(i, j) == raw(i, j) * in.real_pairs(i, j));

  const auto half = bias_matrix(in, 0.5, tp, dp, BiasMode::full).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double expected = i == 0 || j == 0 ? 0.0
                                               : 0.5 * projection_ref(store, "t", in.f_time[i * 4 + j]) +
                                                     0.5 * projection_ref(store, "d", in.f_dist[i * 4 + j]);
      CHECK(half(i, j) == doctest::Approx(expected).epsilon(1e-12));
    }

  const auto dist_only = bias_matrix(in, 0.5, tp, dp, BiasMode::distance_only).value();
  CHECK(dist_only(1, 2) == doctest::Approx(0.5 * projection_ref(store, "d", in.f_dist[1 * 4 + 2])).epsilon(1e-12));

  CHECK_THROWS_AS(bias_matrix(in, 1.5, tp, dp, BiasMode::full), ValidationError);
  CHECK_THROWS_AS(bias_matrix(in, -0.1, tp, dp, BiasMode::full), ValidationError);
  for (const auto& p : store.all()) p->value().fill(0.0);
  CHECK(bias_matrix(in, 0.5, tp, dp, BiasMode::full).value() == Tensor(4, 4));
}

TEST_CASE("transformer layer matches a straight-line reference") {
  const auto net = test::chain({100, 200, 300, 50});
  auto traj = test::path({0, 1, 2, 3});
  traj.steps[3].timestamp += 600;
  const std::vector<std::ptrdiff_t> layout{kVirtualSlot, 0, 1, 2, 3, kVirtualSlot};
  const auto bias = make_bias_inputs(interval_matrices(traj, net, layout), layout);
  std::mt19937_64 rng(3);
  nc::ParameterStore store;
  const TransformerLayer layer(store, "layer", 8, 2, 16, rng);
  randomize(store, 9);
  Tensor x(6, 8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : x.span()) v = u(rng);
  ForwardContext ctx;
  for (bool causal : {true, false}) {
    const auto mask = causal ? causal_mask(6) : std::vector<char>{};
    const auto out = layer.forward(Var::constant(x), bias, BiasMode::full, 0.3, mask, ctx).value();
    const auto ref = transformer_layer_ref(store, "layer", x, 2, bias, 0.3, causal);
    CHECK(nc::max_abs_diff(out, ref) <= 1e-10);
  }
}

TEST_CASE("positional encoding") {
  const std::vector<std::size_t> pos{0, 3};
  const auto pe = positional_encoding(pos, 4);
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
  CHECK(pe(1, 0) == doctest::Approx(std::sin(3.0)));
  CHECK(pe(1, 3) == doctest::Approx(std::cos(3.0 / 100.0)));
}

TEST_CASE("model structure and invariants") {
  const auto net = test::chain({100, 200, 300, 50, 80, 120, 60, 90});
  RedModel model(micro(net), net);
  const auto spatial = model.spatial_table();
  CHECK(spatial.rows() == net.num_segments() + 1);
  auto traj = test::path({0, 1, 2, 3, 4, 5, 6}, {3, 0, 1, 4, 0, 2, 5}, 1672531200, 1);
  ForwardContext ctx;

  SUBCASE("encoder is causal") {
    const std::vector<std::size_t> key{0, 2, 3, 5};
    const auto emb = model.embed(traj, spatial, {});
    const auto tokens = model.encoder_tokens(traj, emb, key, spatial).value();
    const auto bias = model.encoder_bias(traj, key);
    const auto base = model.run_encoder(Var::constant(tokens), bias, {}, ctx).value();
    for (std::size_t j = 1; j < tokens.rows(); ++j) {
      auto perturbed = tokens;
      for (std::size_t c = 0; c < perturbed.cols(); ++c) perturbed(j, c) += 0.7 * static_cast<double>(c + 1);
      const auto out = model.run_encoder(Var::constant(perturbed), bias, {}, ctx).value();
      for (std::size_t i = 0; i < j; ++i)
        for (std::size_t c = 0; c < out.cols(); ++c) CHECK(std::abs(out(i, c) - base(i, c)) <= 1e-12);
      double moved = 0;
      for (std::size_t c = 0; c < out.cols(); ++c) moved += std::abs(out(j, c) - base(j, c));
      CHECK(moved > 0);
    }
  }
  SUBCASE("layouts and logits") {
    const MaskSplit split{{3}, {0, 1, 2, 4, 5, 6}};
    const auto out = model.forward_pretrain(traj, split, spatial, ctx);
    CHECK(out.encoder.hidden.rows() == 3);
    CHECK(out.encoder_logits.rows() == 2);
    CHECK(out.encoder_logits.cols() == net.num_segments() + 3);
    CHECK(out.decoder_logits.rows() == 7);
    CHECK(out.encoder.trajectory_vector.value().span()[0] == out.encoder.hidden.value()(2, 0));
  }
  SUBCASE("decoder inputs are unshuffled") {
    const auto t5 = test::path({0, 1, 2, 3, 4});
    const MaskSplit split{{0, 2, 4}, {1, 3}};
    const auto emb = model.embed(t5, spatial, {});
    const auto enc = model.encode(t5, split.key, spatial, {}, ctx);
    const auto tokens = model.decoder_tokens(t5, emb, split, enc.hidden).value();
    const auto& h = enc.hidden.value();
    const std::vector<std::size_t> mask_pos{2, 4};
    const auto pe = positional_encoding(mask_pos, 8);
    const auto& mt = model.parameters().at("mask_token")->value();
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(tokens(0, c) == h(1, c));
      CHECK(tokens(2, c) == h(2, c));
      CHECK(tokens(4, c) == h(3, c));
      CHECK(tokens(1, c) == doctest::Approx(emb.time.value()(1, c) + pe(0, c) + mt[c]).epsilon(1e-14));
      CHECK(tokens(3, c) == doctest::Approx(emb.time.value()(3, c) + pe(1, c) + mt[c]).epsilon(1e-14));
    }
    const MaskSplit none{{0, 1, 2, 3, 4}, {}};
    const auto enc_all = model.encode(t5, none.key, spatial, {}, ctx);
    const auto plain = model.decoder_tokens(t5, emb, none, enc_all.hidden).value();
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(plain(r, c) == enc_all.hidden.value()(r + 1, c));
    CHECK_THROWS_AS(model.decoder_tokens(t5, emb, MaskSplit{{0, 2}, {1, 3}}, enc.hidden), ContractViolation);
  }
  SUBCASE("zeroed bias projections give the plain Transformer") {
    model.zero_bias_projections();
    const MaskSplit split{{0, 3, 6}, {1, 2, 4, 5}};
    InputMode off;
    off.use_bias = false;
    const auto with = model.forward_pretrain(traj, split, spatial, ctx);
    const auto without = model.forward_pretrain(traj, split, spatial, ctx, off);
    CHECK(with.encoder.hidden.value() == without.encoder.hidden.value());
    CHECK(with.decoder_logits.value() == without.decoder_logits.value());
  }
  SUBCASE("representations are deterministic and checkpointable") {
    RedModel twin(micro(net), net);
    const auto a = model.represent(traj, spatial, {}, ctx).value();
    CHECK(a.cols() == 8);
    CHECK(a == twin.represent(traj, twin.spatial_table(), {}, ctx).value());
    const InferenceSession session(model);
    const auto v1 = session.represent(traj);
    CHECK(v1 == session.represent(traj));
    auto dup = traj;
    dup.id = 99;
    CHECK(session.represent(dup) == v1);
    CHECK(std::vector<double>(a.span().begin(), a.span().end()) == v1);

    const auto back = RedModel::from_checkpoint(nc::decode_checkpoint(nc::encode_checkpoint(model.to_checkpoint())), net);
    CHECK(InferenceSession(back).represent(traj) == v1);

    auto bad = traj;
    bad.steps[2].segment = 50;
    CHECK_THROWS_AS(session.represent(bad), ValidationError);
    bad = traj;
    bad.steps[2].timestamp = 0;
    CHECK_THROWS_AS(session.represent(bad), ValidationError);
  }
}

TEST_CASE("unshuffle inverts the split on fuzzed partitions") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    MaskSplit s;
    for (std::size_t i = 0; i < n; ++i) (rng() % 2 ? s.key : s.mask).push_back(i);
    std::vector<std::size_t> concat = s.key;
    concat.insert(concat.end(), s.mask.begin(), s.mask.end());
    const auto order = unshuffle_order(s);
    for (std::size_t p = 0; p < n; ++p) REQUIRE(concat[order[p]] == p);
  }
}

TEST_CASE("model configuration") {
  const auto net = test::chain({10, 20, 30});
  ModelConfig c = micro(net);
  CHECK(model_config_from_json(to_json(c)).dim == c.dim);
  CHECK(to_json(model_config_from_json(to_json(c))) == to_json(c));
  CHECK(c.vocab_size() == 6);
  CHECK(c.start_token() == 3);
  CHECK(c.end_token() == 4);
  CHECK(c.extract_token() == 5);

  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = micro(net);
  c.lambda2 = 1.2;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = micro(net);
  c.num_segments = 7;
  CHECK_THROWS_AS(RedModel(c, net), ValidationError);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"dim", 8}}), ValidationError);

  c = micro(net);
  c.tie_heads = false;
  const RedModel untied(c, net);
  CHECK(untied.parameters().find("decoder_head.weight") != nullptr);
  const RedModel tied(micro(net), net);
  CHECK(tied.parameters().find("decoder_head.weight") == nullptr);

  const ModelConfig defaults;
  CHECK(defaults.dim == 128);
  CHECK(defaults.gat_heads == std::vector<std::size_t>{8, 16, 1});
  ModelConfig full = defaults;
  full.num_segments = net.num_segments();
  full.num_users = 1;
  const RedModel big(full, net);
  CHECK(InferenceSession(big).represent(test::path({0, 1, 2})).size() == 128);
}
