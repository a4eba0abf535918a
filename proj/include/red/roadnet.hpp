#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "red/geometry.hpp"

namespace red {

/// Dense 0-based index of a road segment. The virtual START node uses |V|.
using SegmentId = std::int32_t;

enum class SegmentType : std::uint8_t {
  living_street,
  motorway,
  primary,
  residential,
  secondary,
  tertiary,
  trunk,
  unclassified,
};

inline constexpr std::size_t kNumSegmentTypes = 8;
inline constexpr std::size_t kContinuousFeatures = 4;
inline constexpr std::size_t kFeatureDim = kContinuousFeatures + kNumSegmentTypes;

std::string_view to_string(SegmentType type);
std::optional<SegmentType> parse_segment_type(std::string_view name);

struct SegmentFeatures {
  double length_m = 1.0;
  double max_speed_kmh = 0.0;
  double avg_travel_time_s = 0.0;
  double direction_deg = 0.0;
  std::int32_t out_degree = 0;
  std::int32_t in_degree = 0;
  SegmentType type = SegmentType::unclassified;

  friend bool operator==(const SegmentFeatures&, const SegmentFeatures&) = default;
};

/// Min/max of the continuous attributes, in feature-vector slot order:
/// max speed, average travel time, direction, length.
struct FeatureRanges {
  std::array<double, kContinuousFeatures> min{};
  std::array<double, kContinuousFeatures> max{};

  friend bool operator==(const FeatureRanges&, const FeatureRanges&) = default;
};

using Edge = std::pair<SegmentId, SegmentId>;
using FeatureVector = std::array<double, kFeatureDim>;

/// Directed segment graph plus the virtual START node. Immutable once built.
class RoadNetwork {
 public:
  RoadNetwork() = default;

  /// Validates the inputs, drops duplicate edges, recomputes degrees and
  /// normalization ranges. `midpoints`, when given, must have one entry per
  /// segment.
  static RoadNetwork build(std::vector<SegmentFeatures> segments, std::vector<Edge> edges,
                           std::optional<std::vector<Point>> midpoints = std::nullopt);

  std::size_t num_segments() const noexcept { return segments_.size(); }
  /// Real segments plus the virtual START node.
  std::size_t num_nodes() const noexcept { return segments_.size() + 1; }
  SegmentId virtual_start() const noexcept { return static_cast<SegmentId>(segments_.size()); }
  bool contains(SegmentId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < segments_.size();
  }

  const SegmentFeatures& segment(SegmentId id) const;
  std::span<const SegmentFeatures> segments() const noexcept { return segments_; }
  /// Sorted, duplicate-free real edges.
  std::span<const Edge> edges() const noexcept { return edges_; }
  std::span<const SegmentId> successors(SegmentId id) const;
  std::span<const SegmentId> predecessors(SegmentId id) const;
  /// Targets of the virtual START node: every real segment.
  std::vector<SegmentId> virtual_out_edges() const;

  const FeatureRanges& ranges() const noexcept { return ranges_; }
  double mean_length() const noexcept { return mean_length_; }

  /// 4 min-max-normalized continuous attributes followed by the one-hot type.
  /// The virtual START node maps to all zeros.
  FeatureVector feature_vector(SegmentId id) const;

  /// Segments reachable within `hops` real out-edges. Virtual edges are never
  /// followed; `id` itself only appears when a cycle leads back to it.
  std::vector<SegmentId> neighbors(SegmentId id, int hops) const;

  bool has_coordinates() const noexcept { return !midpoints_.empty(); }
  /// Representative (midpoint) coordinate. Throws UnsupportedOperation when
  /// the network carries no coordinates.
  const Point& midpoint(SegmentId id) const;

  friend bool operator==(const RoadNetwork& a, const RoadNetwork& b) {
    return a.segments_ == b.segments_ && a.edges_ == b.edges_ && a.midpoints_ == b.midpoints_;
  }

 private:
  void check_id(SegmentId id) const;

  std::vector<SegmentFeatures> segments_;
  std::vector<Edge> edges_;
  std::vector<Point> midpoints_;
  // CSR adjacency over real segments.
  std::vector<std::size_t> out_offsets_, in_offsets_;
  std::vector<SegmentId> out_targets_, in_sources_;
  FeatureRanges ranges_;
  double mean_length_ = 0.0;
};

/// Parses the sectioned graph text format:
///
///   [nodes]
///   id,length_m,max_speed_kmh,avg_tt_s,direction_deg,seg_type[,x_m,y_m]
///   [edges]
///   src,dst
///
/// `#` starts a comment; blank lines are ignored.
RoadNetwork parse_network(std::istream& in, const std::string& source_name = "<stream>");
RoadNetwork load_network(const std::filesystem::path& path);
void write_network(std::ostream& out, const RoadNetwork& net);
void save_network(const std::filesystem::path& path, const RoadNetwork& net);

}  // namespace red
