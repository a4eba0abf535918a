#include "red/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "red/error.hpp"
#include "text_util.hpp"

namespace red {

namespace {

constexpr std::array<std::string_view, kNumSegmentTypes> kTypeNames = {
    "living_street", "motorway", "primary", "residential",
    "secondary",     "tertiary", "trunk",   "unclassified",
};

double normalize(double v, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

void build_csr(std::size_t n, const std::vector<Edge>& edges, bool by_source,
               std::vector<std::size_t>& offsets, std::vector<SegmentId>& targets) {
  offsets.assign(n + 1, 0);
  for (const auto& [s, d] : edges) ++offsets[static_cast<std::size_t>(by_source ? s : d) + 1];
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  targets.assign(edges.size(), 0);
  auto cursor = offsets;
  for (const auto& [s, d] : edges) {
    const auto key = static_cast<std::size_t>(by_source ? s : d);
    targets[cursor[key]++] = by_source ? d : s;
  }
}

}  // namespace

std::string_view to_string(SegmentType type) { return kTypeNames.at(static_cast<std::size_t>(type)); }

std::optional<SegmentType> parse_segment_type(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) return static_cast<SegmentType>(i);
  }
  return std::nullopt;
}

RoadNetwork RoadNetwork::build(std::vector<SegmentFeatures> segments, std::vector<Edge> edges,
                               std::optional<std::vector<Point>> midpoints) {
  const auto n = segments.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = segments[i];
    if (!(s.length_m > 0.0) || !std::isfinite(s.length_m))
      throw ValidationError("segment " + std::to_string(i) + ": length must be positive");
    if (!(s.max_speed_kmh >= 0.0) || !(s.avg_travel_time_s >= 0.0) ||
        !std::isfinite(s.max_speed_kmh) || !std::isfinite(s.avg_travel_time_s))
      throw ValidationError("segment " + std::to_string(i) + ": speed and travel time must be >= 0");
    if (!(s.direction_deg >= 0.0 && s.direction_deg < 360.0))
      throw ValidationError("segment " + std::to_string(i) + ": direction must lie in [0, 360)");
  }
  for (const auto& [s, d] : edges) {
    const auto in_range = [n](SegmentId v) { return v >= 0 && static_cast<std::size_t>(v) < n; };
    if (!in_range(s) || !in_range(d))
      throw IntegrityError("edge (" + std::to_string(s) + ", " + std::to_string(d) +
                           ") references a segment outside [0, " + std::to_string(n) + ")");
    if (s == d) throw IntegrityError("self-loop on segment " + std::to_string(s));
  }
  if (midpoints && midpoints->size() != n)
    throw ValidationError("coordinate count does not match segment count");

  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  RoadNetwork net;
  net.segments_ = std::move(segments);
  net.edges_ = std::move(edges);
  if (midpoints) net.midpoints_ = std::move(*midpoints);
  build_csr(n, net.edges_, true, net.out_offsets_, net.out_targets_);
  build_csr(n, net.edges_, false, net.in_offsets_, net.in_sources_);

  double total_length = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = net.segments_[i];
    s.out_degree = static_cast<std::int32_t>(net.out_offsets_[i + 1] - net.out_offsets_[i]);
    s.in_degree = static_cast<std::int32_t>(net.in_offsets_[i + 1] - net.in_offsets_[i]);
    const std::array<double, kContinuousFeatures> attrs = {s.max_speed_kmh, s.avg_travel_time_s,
                                                           s.direction_deg, s.length_m};
    for (std::size_t k = 0; k < kContinuousFeatures; ++k) {
      net.ranges_.min[k] = i == 0 ? attrs[k] : std::min(net.ranges_.min[k], attrs[k]);
      net.ranges_.max[k] = i == 0 ? attrs[k] : std::max(net.ranges_.max[k], attrs[k]);
    }
    total_length += s.length_m;
  }
  net.mean_length_ = n == 0 ? 0.0 : total_length / static_cast<double>(n);
  return net;
}

void RoadNetwork::check_id(SegmentId id) const {
  if (!contains(id))
    throw std::out_of_range("segment id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(segments_.size()) + ")");
}

const SegmentFeatures& RoadNetwork::segment(SegmentId id) const {
  check_id(id);
  return segments_[static_cast<std::size_t>(id)];
}

std::span<const SegmentId> RoadNetwork::successors(SegmentId id) const {
  check_id(id);
  const auto i = static_cast<std::size_t>(id);
  return {out_targets_.data() + out_offsets_[i], out_offsets_[i + 1] - out_offsets_[i]};
}

std::span<const SegmentId> RoadNetwork::predecessors(SegmentId id) const {
  check_id(id);
  const auto i = static_cast<std::size_t>(id);
  return {in_sources_.data() + in_offsets_[i], in_offsets_[i + 1] - in_offsets_[i]};
}

std::vector<SegmentId> RoadNetwork::virtual_out_edges() const {
  std::vector<SegmentId> out(segments_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<SegmentId>(i);
  return out;
}

FeatureVector RoadNetwork::feature_vector(SegmentId id) const {
  FeatureVector f{};
  if (id == virtual_start()) return f;
  const auto& s = segment(id);
  const std::array<double, kContinuousFeatures> attrs = {s.max_speed_kmh, s.avg_travel_time_s,
                                                         s.direction_deg, s.length_m};
  for (std::size_t k = 0; k < kContinuousFeatures; ++k)
    f[k] = normalize(attrs[k], ranges_.min[k], ranges_.max[k]);
  f[kContinuousFeatures + static_cast<std::size_t>(s.type)] = 1.0;
  return f;
}

std::vector<SegmentId> RoadNetwork::neighbors(SegmentId id, int hops) const {
  check_id(id);
  if (hops < 1) throw ValidationError("hops must be >= 1");
  std::vector<char> seen(segments_.size(), 0);
  std::vector<SegmentId> frontier = {id};
  std::vector<SegmentId> result;
  for (int h = 0; h < hops && !frontier.empty(); ++h) {
    std::vector<SegmentId> next;
    for (auto u : frontier) {
      for (auto v : successors(u)) {
        if (seen[static_cast<std::size_t>(v)]) continue;
        seen[static_cast<std::size_t>(v)] = 1;
        result.push_back(v);
        next.push_back(v);
      }
    }
    frontier = std::move(next);
  }
  std::sort(result.begin(), result.end());
  return result;
}

const Point& RoadNetwork::midpoint(SegmentId id) const {
  if (!has_coordinates()) throw UnsupportedOperation("road network carries no segment coordinates");
  check_id(id);
  return midpoints_[static_cast<std::size_t>(id)];
}

RoadNetwork parse_network(std::istream& in, const std::string& source_name) {
  enum class Section { none, nodes, edges } section = Section::none;
  struct NodeRow {
    SegmentFeatures features;
    std::optional<Point> point;
    std::size_t line;
  };
  std::vector<std::optional<NodeRow>> rows;
  std::vector<Edge> edges;
  std::vector<std::size_t> edge_lines;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line == "[nodes]") {
      section = Section::nodes;
      continue;
    }
    if (line == "[edges]") {
      section = Section::edges;
      continue;
    }
    const auto fields = detail::split(line, ',');
    if (section == Section::none) throw ParseError(source_name, line_no, "row outside [nodes]/[edges] section");
    if (section == Section::nodes) {
      if (fields.size() != 6 && fields.size() != 8)
        throw ParseError(source_name, line_no, "node row needs 6 or 8 fields, got " + std::to_string(fields.size()));
      const auto id = detail::parse_number<std::int64_t>(fields[0]);
      const auto len = detail::parse_number<double>(fields[1]);
      const auto speed = detail::parse_number<double>(fields[2]);
      const auto tt = detail::parse_number<double>(fields[3]);
      const auto dir = detail::parse_number<double>(fields[4]);
      const auto type = parse_segment_type(fields[5]);
      if (!id || *id < 0 || !len || !speed || !tt || !dir)
        throw ParseError(source_name, line_no, "malformed node row");
      if (!type) throw ParseError(source_name, line_no, "unknown segment type '" + std::string(fields[5]) + "'");
      if (!(*len > 0.0)) throw ValidationError(source_name + ":" + std::to_string(line_no) + ": segment length must be positive");
      NodeRow row{{*len, *speed, *tt, *dir, 0, 0, *type}, std::nullopt, line_no};
      if (fields.size() == 8) {
        const auto x = detail::parse_number<double>(fields[6]);
        const auto y = detail::parse_number<double>(fields[7]);
        if (!x || !y) throw ParseError(source_name, line_no, "malformed coordinates");
        row.point = Point{*x, *y};
      }
      const auto idx = static_cast<std::size_t>(*id);
      if (idx >= rows.size()) rows.resize(idx + 1);
      if (rows[idx]) throw ParseError(source_name, line_no, "duplicate segment id " + std::to_string(idx));
      rows[idx] = row;
    } else {
      if (fields.size() != 2) throw ParseError(source_name, line_no, "edge row needs 2 fields");
      const auto s = detail::parse_number<SegmentId>(fields[0]);
      const auto d = detail::parse_number<SegmentId>(fields[1]);
      if (!s || !d) throw ParseError(source_name, line_no, "malformed edge row");
      edges.emplace_back(*s, *d);
      edge_lines.push_back(line_no);
    }
  }

  std::vector<SegmentFeatures> segments;
  std::vector<Point> points;
  bool with_points = !rows.empty() && rows.front() && rows.front()->point.has_value();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]) throw IntegrityError(source_name + ": segment ids are not dense; id " + std::to_string(i) + " missing");
    if (rows[i]->point.has_value() != with_points)
      throw ParseError(source_name, rows[i]->line, "coordinates must be given for all segments or none");
    segments.push_back(rows[i]->features);
    if (with_points) points.push_back(*rows[i]->point);
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [s, d] = edges[e];
    const auto n = static_cast<SegmentId>(segments.size());
    if (s < 0 || d < 0 || s >= n || d >= n)
      throw IntegrityError(source_name + ":" + std::to_string(edge_lines[e]) + ": dangling edge endpoint (" +
                           std::to_string(s) + ", " + std::to_string(d) + ")");
  }
  return RoadNetwork::build(std::move(segments), std::move(edges),
                            with_points ? std::optional(std::move(points)) : std::nullopt);
}

RoadNetwork load_network(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_network(in, path.string());
}

void write_network(std::ostream& out, const RoadNetwork& net) {
  out << "# road network: " << net.num_segments() << " segments, " << net.edges().size() << " edges\n";
  out << "[nodes]\n";
  out << "# id,length_m,max_speed_kmh,avg_tt_s,direction_deg,seg_type" << (net.has_coordinates() ? ",x_m,y_m" : "")
      << "\n";
  for (std::size_t i = 0; i < net.num_segments(); ++i) {
    const auto id = static_cast<SegmentId>(i);
    const auto& s = net.segment(id);
    out << i << ',' << detail::format_exact(s.length_m) << ',' << detail::format_exact(s.max_speed_kmh) << ','
        << detail::format_exact(s.avg_travel_time_s) << ',' << detail::format_exact(s.direction_deg) << ','
        << to_string(s.type);
    if (net.has_coordinates()) {
      const auto& p = net.midpoint(id);
      out << ',' << detail::format_exact(p.x) << ',' << detail::format_exact(p.y);
    }
    out << '\n';
  }
  out << "[edges]\n# src,dst\n";
  for (const auto& [s, d] : net.edges()) out << s << ',' << d << '\n';
}

void save_network(const std::filesystem::path& path, const RoadNetwork& net) {
  detail::write_atomically(path, [&](std::ostream& out) { write_network(out, net); });
}

}  // namespace red
