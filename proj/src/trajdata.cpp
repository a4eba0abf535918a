#include "red/trajdata.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "red/error.hpp"
#include "text_util.hpp"

namespace red {

using json = nlohmann::json;

UserVocabulary::UserVocabulary(std::vector<std::int64_t> raw_ids) : raw_(std::move(raw_ids)) {
  std::sort(raw_.begin(), raw_.end());
  raw_.erase(std::unique(raw_.begin(), raw_.end()), raw_.end());
  for (std::size_t i = 0; i < raw_.size(); ++i) index_.emplace(raw_[i], static_cast<UserId>(i));
}

UserId UserVocabulary::dense(std::int64_t raw) const {
  const auto it = index_.find(raw);
  return it == index_.end() ? kUnknownUser : it->second;
}

void validate_trajectory(const PathTrajectory& traj, const RoadNetwork& net) {
  if (traj.steps.size() < kMinTrajectorySteps || traj.steps.size() > kMaxTrajectorySteps)
    throw ValidationError("trajectory " + std::to_string(traj.id) + " has " + std::to_string(traj.steps.size()) +
                          " steps; expected [6, 256]");
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const auto& s = traj.steps[i];
    if (!net.contains(s.segment))
      throw ValidationError("trajectory " + std::to_string(traj.id) + " references unknown segment " +
                            std::to_string(s.segment));
    if (s.gps_point_count < 0) throw ValidationError("negative gps point count");
    if (i > 0 && s.timestamp < traj.steps[i - 1].timestamp)
      throw ValidationError("trajectory " + std::to_string(traj.id) + " has decreasing timestamps");
  }
}

namespace {

struct RawRecord {
  std::int64_t id;
  std::int64_t user;
  std::vector<PathStep> steps;
};

enum class RecordStatus { ok, malformed, unknown_segment, time_order };

RecordStatus parse_record(std::string_view line, std::int64_t default_id, const RoadNetwork& net, RawRecord& rec) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("user") || !j.contains("steps")) return RecordStatus::malformed;
  const auto& user = j["user"];
  const auto& steps = j["steps"];
  if (!user.is_number_integer() || !steps.is_array()) return RecordStatus::malformed;
  rec.id = default_id;
  if (j.contains("id")) {
    if (!j["id"].is_number_integer()) return RecordStatus::malformed;
    rec.id = j["id"].get<std::int64_t>();
  }
  rec.user = user.get<std::int64_t>();
  rec.steps.clear();
  rec.steps.reserve(steps.size());
  for (const auto& s : steps) {
    if (!s.is_array() || s.size() != 3 || !s[0].is_number_integer() || !s[1].is_number_integer() ||
        !s[2].is_number_integer())
      return RecordStatus::malformed;
    const auto seg = s[0].get<std::int64_t>();
    const auto gps = s[2].get<std::int64_t>();
    if (gps < 0 || gps > std::numeric_limits<std::int32_t>::max()) return RecordStatus::malformed;
    if (seg < 0 || seg >= static_cast<std::int64_t>(net.num_segments())) return RecordStatus::unknown_segment;
    rec.steps.push_back({static_cast<SegmentId>(seg), s[1].get<std::int64_t>(), static_cast<std::int32_t>(gps)});
  }
  for (std::size_t i = 1; i < rec.steps.size(); ++i)
    if (rec.steps[i].timestamp < rec.steps[i - 1].timestamp) return RecordStatus::time_order;
  return RecordStatus::ok;
}

}  // namespace

TrajectoryDataset parse_trajectories(std::istream& in, const RoadNetwork& net, const UserVocabulary* vocabulary) {
  TrajectoryDataset out;
  std::vector<RawRecord> kept;
  std::string line;
  std::int64_t record_no = 0;
  RawRecord rec;
  while (std::getline(in, line)) {
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    ++out.stats.records;
    const auto status = parse_record(body, record_no++, net, rec);
    switch (status) {
      case RecordStatus::malformed: ++out.stats.malformed; continue;
      case RecordStatus::unknown_segment: ++out.stats.unknown_segment; continue;
      case RecordStatus::time_order: ++out.stats.time_order; continue;
      case RecordStatus::ok: break;
    }
    if (rec.steps.size() > kMaxTrajectorySteps) {
      rec.steps.resize(kMaxTrajectorySteps);
      ++out.stats.truncated;
    }
    if (rec.steps.size() < kMinTrajectorySteps) {
      ++out.stats.too_short;
      continue;
    }
    kept.push_back(rec);
  }
  if (in.bad()) throw IoError("read error while loading trajectories");

  if (vocabulary) {
    out.users = *vocabulary;
  } else {
    std::vector<std::int64_t> raw;
    raw.reserve(kept.size());
    for (const auto& r : kept) raw.push_back(r.user);
    out.users = UserVocabulary(std::move(raw));
  }
  out.trajectories.reserve(kept.size());
  for (auto& r : kept) out.trajectories.push_back({r.id, out.users.dense(r.user), std::move(r.steps)});
  out.stats.kept = out.trajectories.size();
  return out;
}

TrajectoryDataset load_trajectories(const std::filesystem::path& path, const RoadNetwork& net,
                                    const UserVocabulary* vocabulary) {
  auto in = detail::open_input(path);
  return parse_trajectories(in, net, vocabulary);
}

void write_trajectories(std::ostream& out, const std::vector<PathTrajectory>& trajectories,
                        const UserVocabulary& users) {
  for (const auto& t : trajectories) {
    const std::int64_t raw_user = t.user == kUnknownUser ? -1 : users.raw(t.user);
    out << "{\"id\":" << t.id << ",\"user\":" << raw_user << ",\"steps\":[";
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      const auto& s = t.steps[i];
      out << (i ? "," : "") << '[' << s.segment << ',' << s.timestamp << ',' << s.gps_point_count << ']';
    }
    out << "]}\n";
  }
}

void save_trajectories(const std::filesystem::path& path, const std::vector<PathTrajectory>& trajectories,
                       const UserVocabulary& users) {
  detail::write_atomically(path, [&](std::ostream& out) { write_trajectories(out, trajectories, users); });
}

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    // Absorb representation error such as 0.6 * 10 = 5.999...
    const double fl = std::floor(exact + 1e-9);
    sizes[i] = static_cast<std::size_t>(fl);
    frac[i] = std::max(0.0, exact - fl);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++sizes[order[k]];
  return sizes;
}

DatasetSplit split_dataset(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
  const auto sizes = split_sizes(n, ratios);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  DatasetSplit split;
  split.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
  split.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                          perm.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
  split.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), perm.end());
  return split;
}

double expected_gps_points(double travel_time_s, double interval_s) {
  if (!(interval_s > 0.0)) throw ValidationError("sampling interval must be positive");
  return std::max(0.0, travel_time_s) / interval_s;
}

namespace {

double speed_limit_kmh(SegmentType type) {
  switch (type) {
    case SegmentType::living_street: return 20.0;
    case SegmentType::motorway: return 100.0;
    case SegmentType::primary: return 60.0;
    case SegmentType::residential: return 30.0;
    case SegmentType::secondary: return 50.0;
    case SegmentType::tertiary: return 40.0;
    case SegmentType::trunk: return 80.0;
    case SegmentType::unclassified: return 30.0;
  }
  return 30.0;
}

struct GridLayout {
  int rows, cols;
  std::vector<std::pair<int, int>> seg_nodes;  // (from intersection, to intersection)
  std::vector<std::vector<SegmentId>> outgoing;  // per intersection
};

}  // namespace

SyntheticData generate_synthetic(const GeneratorConfig& cfg) {
  if (cfg.grid_rows < 2 || cfg.grid_cols < 2) throw ValidationError("grid must be at least 2x2");
  if (cfg.n_users <= 0) throw ValidationError("n_users must be positive");
  if (cfg.min_steps < kMinTrajectorySteps || cfg.max_steps > kMaxTrajectorySteps || cfg.min_steps > cfg.max_steps)
    throw ValidationError("trajectory step bounds must lie within [6, 256]");
  if (!(cfg.sampling_interval_s > 0.0)) throw ValidationError("sampling interval must be positive");

  std::mt19937_64 rng(cfg.seed);
  const int rows = cfg.grid_rows, cols = cfg.grid_cols;
  const auto node_of = [cols](int r, int c) { return r * cols + c; };
  const auto node_point = [&](int node) {
    return Point{(node % cols) * cfg.block_spacing_m, (node / cols) * cfg.block_spacing_m};
  };

  // Undirected streets in row-major order: east link then north link.
  std::vector<std::pair<int, int>> streets;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) streets.emplace_back(node_of(r, c), node_of(r, c + 1));
      if (r + 1 < rows) streets.emplace_back(node_of(r, c), node_of(r + 1, c));
    }
  // Every type appears once the grid has at least 8 streets.
  std::vector<SegmentType> type_cycle;
  for (std::size_t i = 0; i < streets.size(); ++i) type_cycle.push_back(static_cast<SegmentType>(i % kNumSegmentTypes));
  std::shuffle(type_cycle.begin(), type_cycle.end(), rng);

  std::uniform_real_distribution<double> length_dist(20.0, 300.0);
  std::vector<SegmentFeatures> segments;
  std::vector<Point> midpoints;
  std::vector<std::pair<int, int>> seg_nodes;
  std::vector<std::vector<SegmentId>> outgoing(static_cast<std::size_t>(rows * cols));
  for (std::size_t s = 0; s < streets.size(); ++s) {
    const double length = length_dist(rng);
    const auto type = type_cycle[s];
    const double speed = speed_limit_kmh(type);
    for (int dir = 0; dir < 2; ++dir) {
      const int from = dir == 0 ? streets[s].first : streets[s].second;
      const int to = dir == 0 ? streets[s].second : streets[s].first;
      const auto a = node_point(from), b = node_point(to);
      double heading = std::atan2(b.x - a.x, b.y - a.y) * 180.0 / M_PI;
      if (heading < 0.0) heading += 360.0;
      if (heading >= 360.0) heading -= 360.0;
      const auto id = static_cast<SegmentId>(segments.size());
      segments.push_back({length, speed, length / speed * 3.6, heading, 0, 0, type});
      midpoints.push_back({(a.x + b.x) / 2.0, (a.y + b.y) / 2.0});
      seg_nodes.emplace_back(from, to);
      outgoing[static_cast<std::size_t>(from)].push_back(id);
    }
  }
  std::vector<Edge> edges;
  for (std::size_t s = 0; s < seg_nodes.size(); ++s) {
    const auto [from, to] = seg_nodes[s];
    for (auto next : outgoing[static_cast<std::size_t>(to)]) {
      if (seg_nodes[static_cast<std::size_t>(next)].second == from) continue;  // no U-turns
      edges.emplace_back(static_cast<SegmentId>(s), next);
    }
  }
  auto net = RoadNetwork::build(segments, edges, midpoints);

  struct UserHabit {
    int home;
    double depart_hour;
  };
  std::uniform_int_distribution<int> node_dist(0, rows * cols - 1);
  std::uniform_real_distribution<double> hour_dist(6.0, 22.0);
  std::vector<UserHabit> habits;
  for (int u = 0; u < cfg.n_users; ++u) habits.push_back({node_dist(rng), hour_dist(rng)});

  std::uniform_int_distribution<int> user_dist(0, cfg.n_users - 1);
  std::uniform_int_distribution<std::size_t> steps_dist(cfg.min_steps, cfg.max_steps);
  std::uniform_int_distribution<int> day_dist(0, 364);
  std::uniform_int_distribution<int> jitter(-2, 2);
  std::normal_distribution<double> hour_noise(0.0, 0.75);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> tt_noise(0.8, 1.6);

  const double home_scale = 2.0 * cfg.block_spacing_m;
  std::vector<PathTrajectory> trajectories;
  trajectories.reserve(cfg.n_trajectories);
  for (std::size_t t = 0; t < cfg.n_trajectories; ++t) {
    const int user = user_dist(rng);
    const auto& habit = habits[static_cast<std::size_t>(user)];
    const int home_r = habit.home / cols, home_c = habit.home % cols;
    const int start_r = std::clamp(home_r + jitter(rng), 0, rows - 1);
    const int start_c = std::clamp(home_c + jitter(rng), 0, cols - 1);
    const auto& first_choices = outgoing[static_cast<std::size_t>(node_of(start_r, start_c))];
    SegmentId current = first_choices[static_cast<std::size_t>(unit(rng) * first_choices.size()) % first_choices.size()];
    const auto n_steps = steps_dist(rng);
    const auto home_point = node_point(habit.home);

    double hour = std::clamp(habit.depart_hour + hour_noise(rng), 0.0, 23.99);
    double clock = static_cast<double>(cfg.base_epoch_s) + 86400.0 * day_dist(rng) + 3600.0 * hour;

    PathTrajectory traj;
    traj.id = static_cast<std::int64_t>(t);
    traj.user = static_cast<UserId>(user);
    for (std::size_t i = 0; i < n_steps; ++i) {
      const auto& seg = net.segment(current);
      const double travel = seg.avg_travel_time_s * tt_noise(rng);
      std::int32_t gps = 0;
      if (unit(rng) >= cfg.zero_gps_probability) {
        std::poisson_distribution<std::int32_t> pd(expected_gps_points(travel, cfg.sampling_interval_s));
        gps = pd(rng);
      }
      traj.steps.push_back({current, static_cast<std::int64_t>(std::llround(clock)), gps});
      clock += travel;

      // Prefer going straight and staying near home.
      const auto succ = net.successors(current);
      std::vector<double> weights;
      weights.reserve(succ.size());
      for (auto next : succ) {
        const auto& ns = net.segment(next);
        const auto end = node_point(seg_nodes[static_cast<std::size_t>(next)].second);
        double w = std::exp(-distance(end, home_point) / home_scale);
        if (std::abs(ns.direction_deg - seg.direction_deg) < 1e-9) w *= 3.0;
        weights.push_back(w);
      }
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      current = succ[pick(rng)];
    }
    trajectories.push_back(std::move(traj));
  }

  std::vector<std::int64_t> raw_users(static_cast<std::size_t>(cfg.n_users));
  std::iota(raw_users.begin(), raw_users.end(), std::int64_t{0});
  return {std::move(net), std::move(trajectories), UserVocabulary(std::move(raw_users))};
}

}  // namespace red
