#include "red/simbaselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "parallel.hpp"
#include "red/error.hpp"

namespace red {
namespace {

void check_sequence(const PointSeq& s) {
  if (s.empty()) throw ValidationError("point sequence must not be empty");
  for (const auto& p : s)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ValidationError("point sequence has non-finite coordinates");
}

void check_pair(const PointSeq& a, const PointSeq& b) {
  check_sequence(a);
  check_sequence(b);
}

void check_eps(double eps) {
  if (!(eps > 0)) throw ValidationError("eps must be positive");
}

// Rolling two-row DP table of (|b|+1) columns.
template <typename T>
struct Rows {
  std::vector<T> prev, cur;
  explicit Rows(std::size_t cols, T init) : prev(cols, init), cur(cols, init) {}
  void advance() { std::swap(prev, cur); }
};

double directed_hausdorff(const PointSeq& a, const PointSeq& b) {
  double worst = 0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, distance(p, q));
    worst = std::max(worst, best);
  }
  return worst;
}

double directed_sspd(const PointSeq& a, const PointSeq& b) {
  double total = 0;
  for (const auto& p : a) total += point_to_polyline(p, b);
  return total / static_cast<double>(a.size());
}

}  // namespace

double dtw(const PointSeq& a, const PointSeq& b) {
  check_pair(a, b);
  constexpr double inf = std::numeric_limits<double>::infinity();
  Rows<double> d(b.size() + 1, inf);
  d.prev[0] = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    d.cur[0] = inf;
    for (std::size_t j = 1; j <= b.size(); ++j)
      d.cur[j] = distance(a[i - 1], b[j - 1]) + std::min({d.prev[j - 1], d.prev[j], d.cur[j - 1]});
    d.advance();
  }
  return d.prev[b.size()];
}

double discrete_frechet(const PointSeq& a, const PointSeq& b) {
  check_pair(a, b);
  constexpr double inf = std::numeric_limits<double>::infinity();
  Rows<double> d(b.size() + 1, inf);
  d.prev[0] = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    d.cur[0] = inf;
    for (std::size_t j = 1; j <= b.size(); ++j)
      d.cur[j] = std::max(distance(a[i - 1], b[j - 1]), std::min({d.prev[j - 1], d.prev[j], d.cur[j - 1]}));
    d.advance();
  }
  return d.prev[b.size()];
}

double hausdorff(const PointSeq& a, const PointSeq& b) {
  check_pair(a, b);
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

std::size_t lcss(const PointSeq& a, const PointSeq& b, double eps) {
  check_pair(a, b);
  check_eps(eps);
  Rows<std::size_t> d(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      d.cur[j] = distance(a[i - 1], b[j - 1]) <= eps ? d.prev[j - 1] + 1 : std::max(d.prev[j], d.cur[j - 1]);
    d.advance();
  }
  return d.prev[b.size()];
}

std::size_t edr(const PointSeq& a, const PointSeq& b, double eps) {
  check_pair(a, b);
  check_eps(eps);
  Rows<std::size_t> d(b.size() + 1, 0);
  for (std::size_t j = 0; j <= b.size(); ++j) d.prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    d.cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = distance(a[i - 1], b[j - 1]) <= eps ? 0 : 1;
      d.cur[j] = std::min({d.prev[j - 1] + sub, d.prev[j] + 1, d.cur[j - 1] + 1});
    }
    d.advance();
  }
  return d.prev[b.size()];
}

double erp(const PointSeq& a, const PointSeq& b, Point gap) {
  check_pair(a, b);
  if (!std::isfinite(gap.x) || !std::isfinite(gap.y)) throw ValidationError("ERP gap point must be finite");
  Rows<double> d(b.size() + 1, 0.0);
  for (std::size_t j = 1; j <= b.size(); ++j) d.prev[j] = d.prev[j - 1] + distance(b[j - 1], gap);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    const double ga = distance(a[i - 1], gap);
    d.cur[0] = d.prev[0] + ga;
    for (std::size_t j = 1; j <= b.size(); ++j)
      d.cur[j] = std::min({d.prev[j - 1] + distance(a[i - 1], b[j - 1]), d.prev[j] + ga,
                           d.cur[j - 1] + distance(b[j - 1], gap)});
    d.advance();
  }
  return d.prev[b.size()];
}

double point_to_polyline(const Point& p, const PointSeq& line) {
  if (line.empty()) throw ValidationError("polyline must not be empty");
  if (line.size() == 1) return distance(p, line.front());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Point& s = line[i];
    const Point& e = line[i + 1];
    const double dx = e.x - s.x, dy = e.y - s.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - s.x) * dx + (p.y - s.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, distance(p, {s.x + t * dx, s.y + t * dy}));
  }
  return best;
}

double sspd(const PointSeq& a, const PointSeq& b) {
  check_pair(a, b);
  return (directed_sspd(a, b) + directed_sspd(b, a)) / 2.0;
}

PointSeq traj_to_pointseq(const PathTrajectory& traj, const RoadNetwork& net) {
  if (!net.has_coordinates()) throw UnsupportedOperation("road network has no segment coordinates");
  PointSeq out;
  out.reserve(traj.steps.size());
  for (const auto& s : traj.steps) out.push_back(net.midpoint(s.segment));
  return out;
}

Measure parse_measure(std::string_view name) {
  for (auto m : {Measure::dtw, Measure::frechet, Measure::hausdorff, Measure::lcss, Measure::edr, Measure::erp,
                 Measure::sspd})
    if (to_string(m) == name) return m;
  throw ValidationError("unknown similarity measure '" + std::string(name) + "'");
}

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::dtw: return "dtw";
    case Measure::frechet: return "frechet";
    case Measure::hausdorff: return "hausdorff";
    case Measure::lcss: return "lcss";
    case Measure::edr: return "edr";
    case Measure::erp: return "erp";
    case Measure::sspd: return "sspd";
  }
  return "?";
}

bool is_similarity(Measure m) { return m == Measure::lcss; }

double evaluate_measure(Measure m, const PointSeq& a, const PointSeq& b, const MeasureParams& params) {
  switch (m) {
    case Measure::dtw: return dtw(a, b);
    case Measure::frechet: return discrete_frechet(a, b);
    case Measure::hausdorff: return hausdorff(a, b);
    case Measure::lcss: return static_cast<double>(lcss(a, b, params.eps));
    case Measure::edr: return static_cast<double>(edr(a, b, params.eps));
    case Measure::erp: return erp(a, b, params.gap);
    case Measure::sspd: return sspd(a, b);
  }
  throw ContractViolation("unhandled measure");
}

std::vector<double> pairwise_scores(Measure m, std::span<const PointSeq> seqs,
                                    std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                    const MeasureParams& params, std::size_t threads) {
  for (const auto& [i, j] : pairs)
    if (i >= seqs.size() || j >= seqs.size()) throw ValidationError("pair index outside the sequence list");
  std::vector<double> out(pairs.size());
  detail::parallel_chunks(pairs.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k)
      out[k] = evaluate_measure(m, seqs[pairs[k].first], seqs[pairs[k].second], params);
  });
  return out;
}

}  // namespace red
