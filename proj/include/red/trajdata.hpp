#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "red/roadnet.hpp"

namespace red {

/// Dense user index; kUnknownUser marks users absent from the vocabulary.
using UserId = std::int32_t;
inline constexpr UserId kUnknownUser = -1;

inline constexpr std::size_t kMinTrajectorySteps = 6;
inline constexpr std::size_t kMaxTrajectorySteps = 256;

struct PathStep {
  SegmentId segment = 0;
  std::int64_t timestamp = 0;  // seconds since epoch, UTC
  std::int32_t gps_point_count = 0;

  friend bool operator==(const PathStep&, const PathStep&) = default;
};

struct PathTrajectory {
  std::int64_t id = 0;
  UserId user = kUnknownUser;
  std::vector<PathStep> steps;

  std::size_t size() const noexcept { return steps.size(); }
  friend bool operator==(const PathTrajectory&, const PathTrajectory&) = default;
};

/// Raw user id <-> dense index. Dense ids follow ascending raw-id order.
class UserVocabulary {
 public:
  UserVocabulary() = default;
  explicit UserVocabulary(std::vector<std::int64_t> raw_ids);

  std::size_t size() const noexcept { return raw_.size(); }
  UserId dense(std::int64_t raw) const;  // kUnknownUser when absent
  std::int64_t raw(UserId dense) const { return raw_.at(static_cast<std::size_t>(dense)); }
  const std::vector<std::int64_t>& raw_ids() const noexcept { return raw_; }

  friend bool operator==(const UserVocabulary& a, const UserVocabulary& b) { return a.raw_ == b.raw_; }

 private:
  std::vector<std::int64_t> raw_;
  std::map<std::int64_t, UserId> index_;
};

struct LoadStats {
  std::size_t records = 0;
  std::size_t kept = 0;
  std::size_t too_short = 0;
  std::size_t truncated = 0;
  std::size_t unknown_segment = 0;
  std::size_t time_order = 0;
  std::size_t malformed = 0;

  std::size_t skipped() const noexcept { return too_short + unknown_segment + time_order + malformed; }
};

struct TrajectoryDataset {
  std::vector<PathTrajectory> trajectories;
  UserVocabulary users;
  LoadStats stats;
};

/// Reads one JSON object per line: {"id": n, "user": u, "steps": [[seg, t, gps], ...]}.
/// `id` is optional and defaults to the 0-based record number. Records with
/// fewer than 6 steps are dropped, longer than 256 are truncated, and invalid
/// records are skipped and counted. When `vocabulary` is given, users are
/// mapped through it (unseen users become kUnknownUser); otherwise a fresh
/// dense vocabulary is built from the kept records.
TrajectoryDataset parse_trajectories(std::istream& in, const RoadNetwork& net,
                                     const UserVocabulary* vocabulary = nullptr);
TrajectoryDataset load_trajectories(const std::filesystem::path& path, const RoadNetwork& net,
                                    const UserVocabulary* vocabulary = nullptr);
void write_trajectories(std::ostream& out, const std::vector<PathTrajectory>& trajectories,
                        const UserVocabulary& users);
void save_trajectories(const std::filesystem::path& path, const std::vector<PathTrajectory>& trajectories,
                       const UserVocabulary& users);

/// Throws ValidationError unless `traj` satisfies the loaded-trajectory
/// invariants against `net` (length bounds, valid segments, monotone time).
void validate_trajectory(const PathTrajectory& traj, const RoadNetwork& net);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of [0, n) followed by a contiguous partition. Part sizes use
/// largest-remainder rounding (floor, then hand leftovers to the largest
/// fractional parts, ties going left to right).
DatasetSplit split_dataset(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed);
std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> ratios);

struct GeneratorConfig {
  int grid_rows = 8;
  int grid_cols = 8;
  std::size_t n_trajectories = 500;
  int n_users = 10;
  std::uint64_t seed = 0;
  double block_spacing_m = 150.0;
  double sampling_interval_s = 15.0;
  std::size_t min_steps = 8;
  std::size_t max_steps = 24;
  double zero_gps_probability = 0.2;
  std::int64_t base_epoch_s = 1672531200;  // 2023-01-01T00:00:00Z
};

struct SyntheticData {
  RoadNetwork network;
  std::vector<PathTrajectory> trajectories;
  UserVocabulary users;
};

/// Mean number of GPS fixes a vehicle leaves on a segment it spends
/// `travel_time_s` on when sampled every `interval_s`.
double expected_gps_points(double travel_time_s, double interval_s);

/// Grid road network (two directed segments per street, no U-turn
/// transitions) and user-biased random-walk trajectories.
SyntheticData generate_synthetic(const GeneratorConfig& config);

}  // namespace red
