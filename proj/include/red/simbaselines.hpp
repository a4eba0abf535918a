#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "red/geometry.hpp"
#include "red/roadnet.hpp"
#include "red/trajdata.hpp"

namespace red {

using PointSeq = std::vector<Point>;

/// Full-warping DTW with Euclidean ground distance.
double dtw(const PointSeq& a, const PointSeq& b);
double discrete_frechet(const PointSeq& a, const PointSeq& b);
/// Symmetric Hausdorff distance.
double hausdorff(const PointSeq& a, const PointSeq& b);
/// Longest common subsequence where points match within `eps` meters.
std::size_t lcss(const PointSeq& a, const PointSeq& b, double eps);
/// Edit distance with real-valued matching within `eps` meters.
std::size_t edr(const PointSeq& a, const PointSeq& b, double eps);
/// Edit distance with real penalty; gaps cost the distance to `gap`.
double erp(const PointSeq& a, const PointSeq& b, Point gap = {});
/// Symmetrized segment-path distance.
double sspd(const PointSeq& a, const PointSeq& b);

/// Distance from `p` to the polyline `line` (point distance for one vertex).
double point_to_polyline(const Point& p, const PointSeq& line);

/// Segment midpoints in trajectory order.
PointSeq traj_to_pointseq(const PathTrajectory& traj, const RoadNetwork& net);

enum class Measure { dtw, frechet, hausdorff, lcss, edr, erp, sspd };

Measure parse_measure(std::string_view name);
std::string_view to_string(Measure m);
/// LCSS is a similarity; every other measure is a distance.
bool is_similarity(Measure m);

struct MeasureParams {
  double eps = 100.0;
  Point gap{};
};

double evaluate_measure(Measure m, const PointSeq& a, const PointSeq& b, const MeasureParams& params = {});

/// Scores for each (i, j) pair of `seqs`, in input order. Work is split over
/// up to `threads` workers.
std::vector<double> pairwise_scores(Measure m, std::span<const PointSeq> seqs,
                                    std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                    const MeasureParams& params = {}, std::size_t threads = 1);

}  // namespace red
