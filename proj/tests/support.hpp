#pragma once

#include <cstdint>
#include <vector>

#include "red/roadnet.hpp"
#include "red/trajdata.hpp"

namespace red::test {

inline SegmentFeatures seg(double length, SegmentType type = SegmentType::residential, double speed = 40.0,
                           double direction = 0.0) {
  SegmentFeatures f;
  f.length_m = length;
  f.max_speed_kmh = speed;
  f.avg_travel_time_s = length / speed * 3.6;
  f.direction_deg = direction;
  f.type = type;
  return f;
}

/// s0 -> s1 -> ... -> s(n-1), midpoints spaced along the x axis.
inline RoadNetwork chain(const std::vector<double>& lengths) {
  std::vector<SegmentFeatures> segs;
  std::vector<Edge> edges;
  std::vector<Point> mids;
  double x = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    segs.push_back(seg(lengths[i], static_cast<SegmentType>(i % kNumSegmentTypes), 30.0 + 10.0 * static_cast<double>(i % 3),
                       static_cast<double>((i * 45) % 360)));
    mids.push_back({x + lengths[i] / 2, 0.0});
    x += lengths[i];
    if (i + 1 < lengths.size()) edges.emplace_back(static_cast<SegmentId>(i), static_cast<SegmentId>(i + 1));
  }
  return RoadNetwork::build(std::move(segs), std::move(edges), std::move(mids));
}

/// One step per entry of `segments`, timestamps `t0 + 30 * i`.
inline PathTrajectory path(const std::vector<SegmentId>& segments, const std::vector<std::int32_t>& gps = {},
                           std::int64_t t0 = 1672531200, UserId user = 0, std::int64_t id = 0) {
  PathTrajectory t{id, user, {}};
  for (std::size_t i = 0; i < segments.size(); ++i)
    t.steps.push_back({segments[i], t0 + 30 * static_cast<std::int64_t>(i), gps.empty() ? 1 : gps[i]});
  return t;
}

}  // namespace red::test
