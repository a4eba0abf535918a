#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "red/error.hpp"
#include "red/trajdata.hpp"
#include "support.hpp"

using namespace red;

namespace {

std::string record(std::int64_t user, std::size_t steps, SegmentId seg = 0, std::int64_t t0 = 1000) {
  std::ostringstream s;
  s << R"({"user":)" << user << R"(,"steps":[)";
  for (std::size_t i = 0; i < steps; ++i) s << (i ? "," : "") << '[' << seg << ',' << t0 + 10 * i << ",1]";
  s << "]}";
  return s.str();
}

TrajectoryDataset parse(const std::string& text, const RoadNetwork& net) {
  std::istringstream in(text);
  return parse_trajectories(in, net);
}

}  // namespace

TEST_CASE("length filters and truncation") {
  const auto net = test::chain(std::vector<double>(100, 50.0));
  const auto data = parse(record(1, 5) + "\n" + record(1, 300) + "\n" + record(2, 6) + "\n", net);
  CHECK(data.stats.records == 3);
  CHECK(data.stats.too_short == 1);
  CHECK(data.stats.truncated == 1);
  REQUIRE(data.trajectories.size() == 2);
  CHECK(data.trajectories[0].steps.size() == 256);
  CHECK(data.trajectories[0].steps.back().timestamp == 1000 + 10 * 255);
  CHECK(data.trajectories[1].steps.size() == 6);
}

TEST_CASE("invalid records are skipped and counted") {
  const auto net = test::chain(std::vector<double>(100, 50.0));
  std::string decreasing = R"({"user":1,"steps":[[0,50,1],[1,40,1],[2,60,1],[3,70,1],[4,80,1],[5,90,1]]})";
  const auto data = parse(record(1, 8, 9999) + "\n" + decreasing + "\nnot json\n" + R"({"user":1})" + "\n" +
                              record(3, 7) + "\n",
                          net);
  CHECK(data.stats.unknown_segment == 1);
  CHECK(data.stats.time_order == 1);
  CHECK(data.stats.malformed == 2);
  CHECK(data.trajectories.size() == 1);
  CHECK(data.stats.kept == 1);
}

TEST_CASE("users are re-indexed densely and preserved through a vocabulary") {
  const auto net = test::chain(std::vector<double>(10, 50.0));
  const auto data = parse(record(42, 6) + "\n" + record(7, 6) + "\n" + record(42, 6) + "\n", net);
  CHECK(data.users.raw_ids() == std::vector<std::int64_t>{7, 42});
  CHECK(data.trajectories[0].user == 1);
  CHECK(data.trajectories[1].user == 0);

  const UserVocabulary vocab({42});
  std::istringstream in(record(7, 6) + "\n" + record(42, 6) + "\n");
  const auto mapped = parse_trajectories(in, net, &vocab);
  CHECK(mapped.trajectories[0].user == kUnknownUser);
  CHECK(mapped.trajectories[1].user == 0);
}

TEST_CASE("write then parse round-trips") {
  GeneratorConfig g;
  g.n_trajectories = 20;
  g.seed = 5;
  const auto synth = generate_synthetic(g);
  std::stringstream buf;
  write_trajectories(buf, synth.trajectories, synth.users);
  const auto back = parse_trajectories(buf, synth.network, &synth.users);
  CHECK(back.trajectories == synth.trajectories);
  CHECK(back.users == synth.users);
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(10, {0.6, 0.2, 0.2}) == std::array<std::size_t, 3>{6, 2, 2});
  CHECK(split_sizes(5, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{4, 1, 0});
  CHECK_THROWS_AS(split_sizes(5, {-0.1, 0.6, 0.5}), ValidationError);
  CHECK_THROWS_AS(split_sizes(5, {0.5, 0.2, 0.2}), ValidationError);

  const auto a = split_dataset(50, {0.6, 0.2, 0.2}, 3);
  const auto b = split_dataset(50, {0.6, 0.2, 0.2}, 3);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);
}

TEST_CASE("splits are disjoint and exhaustive for random sizes and ratios") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 1; n <= 1000; n += 7) {
    double r0 = u(rng), r1 = u(rng), r2 = u(rng);
    const double s = r0 + r1 + r2;
    r0 /= s;
    r1 /= s;
    r2 = 1.0 - r0 - r1;
    const auto split = split_dataset(n, {r0, r1, r2}, n);
    std::vector<std::size_t> all;
    for (const auto* part : {&split.train, &split.validation, &split.test}) all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
    const auto sizes = split_sizes(n, {r0, r1, r2});
    CHECK(std::abs(static_cast<double>(sizes[0]) - r0 * static_cast<double>(n)) <= 1.0);
    CHECK(std::abs(static_cast<double>(sizes[1]) - r1 * static_cast<double>(n)) <= 1.0);
    CHECK(std::abs(static_cast<double>(sizes[2]) - r2 * static_cast<double>(n)) <= 1.0);
  }
}

TEST_CASE("generator") {
  SUBCASE("deterministic for a fixed seed") {
    GeneratorConfig g;
    g.grid_rows = g.grid_cols = 2;
    g.n_trajectories = 1;
    g.seed = 17;
    const auto a = generate_synthetic(g);
    const auto b = generate_synthetic(g);
    CHECK(a.trajectories == b.trajectories);
    CHECK(a.network == b.network);
    std::ostringstream sa, sb;
    write_trajectories(sa, a.trajectories, a.users);
    write_trajectories(sb, b.trajectories, b.users);
    CHECK(sa.str() == sb.str());
  }
  SUBCASE("outputs satisfy load-time invariants") {
    GeneratorConfig g;
    g.n_trajectories = 300;
    g.seed = 2;
    const auto data = generate_synthetic(g);
    CHECK(data.trajectories.size() == 300);
    std::set<SegmentType> types;
    for (const auto& s : data.network.segments()) {
      CHECK(s.length_m >= 20.0);
      CHECK(s.length_m <= 300.0);
      types.insert(s.type);
    }
    CHECK(types.size() == kNumSegmentTypes);
    std::size_t zeros = 0, steps = 0;
    for (const auto& t : data.trajectories) {
      CHECK_NOTHROW(validate_trajectory(t, data.network));
      for (std::size_t i = 1; i < t.steps.size(); ++i) {
        const auto succ = data.network.successors(t.steps[i - 1].segment);
        CHECK(std::find(succ.begin(), succ.end(), t.steps[i].segment) != succ.end());
      }
      for (const auto& s : t.steps) zeros += s.gps_point_count == 0 ? 1 : 0;
      steps += t.steps.size();
    }
    CHECK(zeros > 0);
    CHECK(zeros < steps);
  }
  SUBCASE("expected gps points") {
    CHECK(expected_gps_points(45.0, 15.0) == 3.0);
    CHECK_THROWS_AS(expected_gps_points(45.0, 0.0), ValidationError);
  }
  SUBCASE("invalid settings") {
    GeneratorConfig g;
    g.n_users = 0;
    CHECK_THROWS_AS(generate_synthetic(g), ValidationError);
    g.n_users = 3;
    g.grid_rows = 1;
    CHECK_THROWS_AS(generate_synthetic(g), ValidationError);
  }
}
