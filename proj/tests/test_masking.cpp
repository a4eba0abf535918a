#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "red/error.hpp"
#include "red/masking.hpp"
#include "support.hpp"

using namespace red;

TEST_CASE("thresholds") {
  const auto net = test::chain({50, 150, 100});
  const std::vector<PathTrajectory> data{test::path({0, 1, 2}, {0, 2, 4})};
  const auto th = compute_thresholds(data, net);
  CHECK(th.mean_gps_points == 2.0);
  CHECK(th.mean_length_m == 100.0);

  const std::vector<PathTrajectory> single{test::path({0}, {7})};
  CHECK(compute_thresholds(single, net).mean_gps_points == 7.0);
  CHECK_THROWS_AS(compute_thresholds(std::vector<PathTrajectory>{}, net), ValidationError);
}

TEST_CASE("seven-step example: hot or long steps are key") {
  // s1 hot only, s4 both, s5 hot only, s7 long only.
  const auto net = test::chain({50, 30, 40, 180, 60, 80, 250});
  const std::vector<PathTrajectory> data{test::path({0, 1, 2, 3, 4, 5, 6}, {5, 0, 0, 3, 4, 1, 0})};
  const auto th = compute_thresholds(data, net);
  const auto split = road_aware_split(data[0], net, th);
  CHECK(split.key == std::vector<std::size_t>{0, 3, 4, 6});
  CHECK(split.mask == std::vector<std::size_t>{1, 2, 5});
}

TEST_CASE("hand case with thresholds (2, 100)") {
  const auto net = test::chain({50, 150, 20});
  const auto split = road_aware_split(test::path({0, 1, 2}, {3, 1, 0}), net, {2.0, 100.0});
  CHECK(split.key == std::vector<std::size_t>{0, 1});
  CHECK(split.mask == std::vector<std::size_t>{2});
}

TEST_CASE("comparisons are strict") {
  const auto net = test::chain({100, 100, 100});
  const auto split = road_aware_split(test::path({0, 1, 2}, {2, 3, 2}), net, {2.0, 100.0});
  CHECK(split.key == std::vector<std::size_t>{1});
  CHECK(split.mask == std::vector<std::size_t>{0, 2});
}

TEST_CASE("fallbacks") {
  const auto net = test::chain({10, 20, 30, 40, 50, 60});
  SUBCASE("nothing key promotes the endpoints") {
    const auto split = road_aware_split(test::path({0, 1, 2, 3, 4, 5}, {0, 0, 0, 0, 0, 0}), net, {5.0, 1000.0});
    CHECK(split.key == std::vector<std::size_t>{0, 5});
    CHECK(split.mask == std::vector<std::size_t>{1, 2, 3, 4});
  }
  SUBCASE("everything key demotes the weakest step") {
    const auto split = road_aware_split(test::path({5, 4, 1, 0, 2, 3}, {3, 3, 2, 2, 9, 9}), net, {0.0, 0.0});
    // (2, 20) at position 2 and (2, 10) at position 3: the shorter wins.
    CHECK(split.mask == std::vector<std::size_t>{3});
    CHECK(split.key.size() == 5);
  }
  SUBCASE("random ratio 0 keeps all but one") {
    const auto split = random_split(test::path({0, 1, 2, 3, 4, 5}, {4, 1, 3, 3, 3, 3}), net, 0.0, 1);
    CHECK(split.mask == std::vector<std::size_t>{1});
  }
  SUBCASE("random ratio 1 keeps the endpoints") {
    const auto split = random_split(test::path({0, 1, 2, 3, 4, 5}), net, 1.0, 1);
    CHECK(split.key == std::vector<std::size_t>{0, 5});
  }
}

TEST_CASE("random split sizes and determinism") {
  const auto net = test::chain(std::vector<double>(10, 50.0));
  const auto traj = test::path({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto a = random_split(traj, net, 0.3, 42);
  CHECK(a.mask.size() == 3);
  CHECK(a == random_split(traj, net, 0.3, 42));
  CHECK(random_split(traj, net, 0.55, 1).mask.size() == 6);
  CHECK_THROWS_AS(random_split(traj, net, 1.5, 1), ValidationError);
  CHECK_THROWS_AS(random_split(traj, net, -0.1, 1), ValidationError);
}

TEST_CASE("partition, determinism and monotonicity on fuzzed trajectories") {
  GeneratorConfig g;
  g.n_trajectories = 1;
  const auto net = generate_synthetic(g).network;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<SegmentId> seg(0, static_cast<SegmentId>(net.num_segments() - 1));
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::uniform_int_distribution<std::int32_t> gps(0, 6);
  std::uniform_real_distribution<double> th_gps(0.0, 5.0), th_len(20.0, 300.0), ratio(0.0, 1.0), bump(0.0, 2.0);
  for (int trial = 0; trial < 10000; ++trial) {
    PathTrajectory t;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) t.steps.push_back({seg(rng), static_cast<std::int64_t>(i), gps(rng)});
    const MaskThresholds th{th_gps(rng), th_len(rng)};
    const auto s = road_aware_split(t, net, th);
    REQUIRE(oracle::is_partition(s, n));
    CHECK(s == road_aware_split(t, net, th));
    if (n >= 2) {
      CHECK_FALSE(s.key.empty());
      CHECK_FALSE(s.mask.empty());
    }
    const auto r = random_split(t, net, ratio(rng), static_cast<std::uint64_t>(trial));
    REQUIRE(oracle::is_partition(r, n));

    const MaskThresholds higher{th.mean_gps_points + bump(rng), th.mean_length_m + 100.0 * bump(rng)};
    for (const auto& step : t.steps)
      if (!is_key_step(step, net, th)) CHECK_FALSE(is_key_step(step, net, higher));
  }
}

TEST_CASE("steps on long segments are key more often") {
  GeneratorConfig g;
  g.n_trajectories = 500;
  g.seed = 3;
  const auto data = generate_synthetic(g);
  const auto th = compute_thresholds(data.trajectories, data.network);
  std::size_t long_key = 0, long_total = 0, short_key = 0, short_total = 0;
  for (const auto& t : data.trajectories) {
    const auto split = road_aware_split(t, data.network, th);
    std::vector<char> is_key(t.size(), 0);
    for (auto i : split.key) is_key[i] = 1;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const bool is_long = data.network.segment(t.steps[i].segment).length_m > th.mean_length_m;
      (is_long ? long_total : short_total) += 1;
      (is_long ? long_key : short_key) += is_key[i];
    }
  }
  REQUIRE(long_total > 0);
  REQUIRE(short_total > 0);
  CHECK(static_cast<double>(long_key) / static_cast<double>(long_total) >
        static_cast<double>(short_key) / static_cast<double>(short_total));
}

TEST_CASE("unshuffle") {
  const MaskSplit split{{0, 2, 4}, {1, 3}};
  CHECK(unshuffle_order(split) == std::vector<std::size_t>{0, 3, 1, 4, 2});
  CHECK(unshuffle_order({{0, 1, 2}, {}}) == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(unshuffle_order({{0, 1}, {1}}), ContractViolation);
  CHECK_THROWS_AS(unshuffle_order({{0, 5}, {1}}), ContractViolation);
}

TEST_CASE("strategy names") {
  CHECK(parse_mask_strategy("road-aware") == MaskStrategy::road_aware);
  CHECK(parse_mask_strategy("random") == MaskStrategy::random);
  CHECK(to_string(MaskStrategy::random) == "random");
  CHECK_THROWS_AS(parse_mask_strategy("roadaware"), ValidationError);
}
