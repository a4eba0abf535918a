#include "red/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "red/error.hpp"

namespace red {

MaskStrategy parse_mask_strategy(std::string_view name) {
  if (name == "road-aware") return MaskStrategy::road_aware;
  if (name == "random") return MaskStrategy::random;
  throw ValidationError("unknown mask strategy '" + std::string(name) + "'");
}

std::string_view to_string(MaskStrategy strategy) {
  return strategy == MaskStrategy::road_aware ? "road-aware" : "random";
}

MaskThresholds compute_thresholds(std::span<const PathTrajectory> trajectories, const RoadNetwork& net) {
  if (net.num_segments() == 0) throw ValidationError("cannot compute thresholds over an empty network");
  double points = 0.0;
  std::size_t steps = 0;
  for (const auto& t : trajectories) {
    for (const auto& s : t.steps) points += s.gps_point_count;
    steps += t.steps.size();
  }
  if (steps == 0) throw ValidationError("cannot compute thresholds over an empty dataset");
  return {points / static_cast<double>(steps), net.mean_length()};
}

bool is_key_step(const PathStep& step, const RoadNetwork& net, const MaskThresholds& th) {
  return step.gps_point_count > th.mean_gps_points || net.segment(step.segment).length_m > th.mean_length_m;
}

namespace {

MaskSplit finish(const PathTrajectory& traj, const RoadNetwork& net, std::vector<char> is_key) {
  const auto n = traj.steps.size();
  if (n == 0) return {};
  if (std::none_of(is_key.begin(), is_key.end(), [](char k) { return k; })) {
    is_key.front() = 1;
    is_key.back() = 1;
  }
  if (n >= 2 && std::all_of(is_key.begin(), is_key.end(), [](char k) { return k; })) {
    std::size_t weakest = 0;
    for (std::size_t i = 1; i < n; ++i) {
      const auto& a = traj.steps[i];
      const auto& b = traj.steps[weakest];
      const auto la = net.segment(a.segment).length_m, lb = net.segment(b.segment).length_m;
      if (a.gps_point_count < b.gps_point_count || (a.gps_point_count == b.gps_point_count && la < lb)) weakest = i;
    }
    is_key[weakest] = 0;
  }
  MaskSplit split;
  for (std::size_t i = 0; i < n; ++i) (is_key[i] ? split.key : split.mask).push_back(i);
  return split;
}

}  // namespace

MaskSplit road_aware_split(const PathTrajectory& traj, const RoadNetwork& net, const MaskThresholds& th) {
  std::vector<char> is_key(traj.steps.size());
  for (std::size_t i = 0; i < traj.steps.size(); ++i) is_key[i] = is_key_step(traj.steps[i], net, th) ? 1 : 0;
  return finish(traj, net, std::move(is_key));
}

MaskSplit random_split(const PathTrajectory& traj, const RoadNetwork& net, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ValidationError("mask ratio must lie in [0, 1]");
  const auto n = traj.steps.size();
  const auto n_mask = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> is_key(n, 1);
  for (std::size_t i = 0; i < n_mask; ++i) is_key[order[i]] = 0;
  return finish(traj, net, std::move(is_key));
}

std::vector<std::size_t> unshuffle_order(const MaskSplit& split) {
  const auto n = split.key.size() + split.mask.size();
  std::vector<std::size_t> order(n, n);
  for (std::size_t i = 0; i < split.key.size(); ++i) {
    if (split.key[i] >= n) throw ContractViolation("key position out of range");
    order[split.key[i]] = i;
  }
  for (std::size_t i = 0; i < split.mask.size(); ++i) {
    if (split.mask[i] >= n || order[split.mask[i]] != n) throw ContractViolation("key and mask positions overlap");
    order[split.mask[i]] = split.key.size() + i;
  }
  return order;
}

}  // namespace red
