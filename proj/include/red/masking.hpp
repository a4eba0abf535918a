#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "red/roadnet.hpp"
#include "red/trajdata.hpp"

namespace red {

/// Partition of a trajectory's step positions into encoder-visible key steps
/// and hidden mask steps. Both index lists are strictly increasing.
struct MaskSplit {
  std::vector<std::size_t> key;
  std::vector<std::size_t> mask;

  friend bool operator==(const MaskSplit&, const MaskSplit&) = default;
};

struct MaskThresholds {
  double mean_gps_points = 0.0;
  double mean_length_m = 0.0;
};

enum class MaskStrategy { road_aware, random };

MaskStrategy parse_mask_strategy(std::string_view name);
std::string_view to_string(MaskStrategy strategy);

/// Mean per-step GPS count over `trajectories` and mean real-segment length.
MaskThresholds compute_thresholds(std::span<const PathTrajectory> trajectories, const RoadNetwork& net);

/// A step is key when its segment is hot (more GPS points than average) or
/// long (longer than average). Strict comparisons in both cases.
bool is_key_step(const PathStep& step, const RoadNetwork& net, const MaskThresholds& th);

/// Hot-or-long rule followed by the empty-set fallbacks: an empty key set
/// promotes the first and last steps, an empty mask set demotes the step with
/// the smallest (gps_point_count, length) score (earliest on ties).
MaskSplit road_aware_split(const PathTrajectory& traj, const RoadNetwork& net, const MaskThresholds& th);

/// Masks exactly round(ratio * |steps|) positions chosen uniformly without
/// replacement, then applies the same fallbacks as road_aware_split.
MaskSplit random_split(const PathTrajectory& traj, const RoadNetwork& net, double ratio, std::uint64_t seed);

/// Inverse of the split: for each original position, its row in the
/// concatenation key ++ mask.
std::vector<std::size_t> unshuffle_order(const MaskSplit& split);

}  // namespace red
