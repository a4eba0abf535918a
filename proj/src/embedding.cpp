#include "red/embedding.hpp"

#include <chrono>

#include "red/error.hpp"

namespace red {

nc::GraphAdjacency spatial_adjacency(const RoadNetwork& net) {
  nc::GraphAdjacency graph;
  const auto n = net.num_segments();
  graph.sources.resize(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto& src = graph.sources[i];
    src.push_back(i);
    for (auto p : net.predecessors(static_cast<SegmentId>(i))) src.push_back(static_cast<std::size_t>(p));
  }
  auto& start = graph.sources[n];
  start.push_back(n);
  for (std::size_t i = 0; i < n; ++i) start.push_back(i);
  return graph;
}

Tensor node_features(const RoadNetwork& net) {
  Tensor f(net.num_nodes(), kFeatureDim);
  for (std::size_t i = 0; i < net.num_nodes(); ++i) {
    const auto v = net.feature_vector(static_cast<SegmentId>(i));
    std::copy(v.begin(), v.end(), f.row_ptr(i));
  }
  return f;
}

GatStack::GatStack(nc::ParameterStore& store, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
                   std::vector<std::size_t> heads, std::mt19937_64& rng)
    : heads_(std::move(heads)), out_dim_(out_dim) {
  if (heads_.empty()) throw ValidationError("GAT needs at least one layer");
  std::size_t width_in = in_dim;
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const auto h = heads_[k];
    const bool last = k + 1 == heads_.size();
    if (h == 0 || (!last && out_dim % h != 0))
      throw ValidationError("GAT layer " + std::to_string(k) + ": dim " + std::to_string(out_dim) +
                            " not divisible by " + std::to_string(h) + " heads");
    const auto per_head = last ? out_dim : out_dim / h;
    const auto width = per_head * h;
    const auto name = prefix + "." + std::to_string(k);
    Layer layer;
    layer.weight = store.create(name + ".weight", nc::xavier_uniform(width_in, width, rng));
    layer.att_src = store.create(name + ".att_src", nc::xavier_uniform(1, width, rng));
    layer.att_dst = store.create(name + ".att_dst", nc::xavier_uniform(1, width, rng));
    layer.bias = store.create(name + ".bias", Tensor(1, out_dim));
    layer.heads = h;
    layer.concat = !last;
    layers_.push_back(layer);
    width_in = out_dim;
  }
}

Var GatStack::forward(const Tensor& features, const nc::GraphAdjacency& graph) const {
  Var x = Var::constant(features);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& layer = layers_[k];
    Var projected = nc::matmul(x, layer.weight->var);
    Var agg = nc::graph_attention(projected, layer.att_src->var, layer.att_dst->var, graph, layer.heads);
    if (!layer.concat) agg = nc::average_column_blocks(agg, layer.heads);
    x = nc::add_rowvec(agg, layer.bias->var);
    if (layer.concat) x = nc::elu(x);
  }
  return x;
}

std::array<double, 6> time_vector(std::int64_t timestamp) {
  if (timestamp < 0) throw ValidationError("timestamp must be non-negative");
  using namespace std::chrono;
  const sys_seconds tp{seconds{timestamp}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  return {
      static_cast<double>(hms.hours().count()) / 23.0,
      static_cast<double>(hms.minutes().count()) / 59.0,
      static_cast<double>(hms.seconds().count()) / 59.0,
      (static_cast<int>(ymd.year()) - 2000) / 100.0,
      (static_cast<unsigned>(ymd.month()) - 1) / 11.0,
      (static_cast<unsigned>(ymd.day()) - 1) / 30.0,
  };
}

TimeEncoder::TimeEncoder(nc::ParameterStore& store, const std::string& prefix, std::size_t dim, std::mt19937_64& rng) {
  if (dim % 4 != 0) throw ValidationError("embedding dim must be divisible by 4");
  fc1 = nc::Linear(store, prefix + ".fc1", 6, dim / 4, rng);
  fc2 = nc::Linear(store, prefix + ".fc2", 6, dim / 4, rng);
  type_table = store.create(prefix + ".type_table", nc::normal_init(kNumSegmentTypes, dim / 2, 0.02, rng));
  fusion = nc::Linear(store, prefix + ".fusion", dim, dim, rng);
}

Var TimeEncoder::forward(const Tensor& time_vectors, std::span<const SegmentType> types) const {
  if (time_vectors.rows() != types.size() || time_vectors.cols() != 6)
    throw ContractViolation("time encoder input " + nc::shape_string(time_vectors) + " for " +
                            std::to_string(types.size()) + " types");
  std::vector<std::size_t> rows(types.size());
  for (std::size_t i = 0; i < types.size(); ++i) {
    const auto t = static_cast<std::size_t>(types[i]);
    if (t >= kNumSegmentTypes) throw ValidationError("unknown segment type " + std::to_string(t));
    rows[i] = t;
  }
  const Var v = Var::constant(time_vectors);
  const Var periodic = nc::concat_cols({fc1(v), nc::sin(fc2(v))});
  return fusion(nc::concat_cols({periodic, nc::gather_rows(type_table->var, rows)}));
}

Var TimeEncoder::encode(std::int64_t timestamp, SegmentType type) const {
  const auto v = time_vector(timestamp);
  return forward(Tensor::row(v), std::span<const SegmentType>(&type, 1));
}

UserTable::UserTable(nc::ParameterStore& store, const std::string& name, std::size_t users, std::size_t dim,
                     std::mt19937_64& rng)
    : table(store.create(name, nc::normal_init(users, dim, 0.02, rng))) {}

Var UserTable::lookup(UserId user, std::size_t rows) const {
  const auto dim = table->value().cols();
  if (user == kUnknownUser) return Var::constant(Tensor(rows, dim));
  if (user < 0 || static_cast<std::size_t>(user) >= size())
    throw ValidationError("user id " + std::to_string(user) + " outside the user table");
  const std::vector<std::size_t> idx(rows, static_cast<std::size_t>(user));
  return nc::gather_rows(table->var, idx);
}

StepEmbedding joint_embed(const PathTrajectory& traj, const RoadNetwork& net, const Var& spatial_table,
                          const TimeEncoder& time_encoder, const UserTable& users, const EmbedOptions& options) {
  const auto n = traj.steps.size();
  if (n == 0) throw ValidationError("cannot embed an empty trajectory");
  std::vector<std::size_t> segs(n);
  std::vector<SegmentType> types(n);
  Tensor tv(n, 6);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = traj.steps[i];
    segs[i] = static_cast<std::size_t>(s.segment);
    types[i] = net.segment(s.segment).type;
    const auto v = time_vector(s.timestamp);
    std::copy(v.begin(), v.end(), tv.row_ptr(i));
  }
  StepEmbedding e;
  e.spatial = nc::gather_rows(spatial_table, segs);
  e.time = time_encoder.forward(tv, types);
  if (options.departure_time_only && n > 1) {
    Tensor keep(n, e.time.cols());
    std::fill_n(keep.row_ptr(0), keep.cols(), 1.0);
    e.time = nc::mul(e.time, Var::constant(std::move(keep)));
  }
  const auto dim = spatial_table.cols();
  e.user = options.use_user ? users.lookup(traj.user, n) : Var::constant(Tensor(n, dim));
  e.joint = nc::add(nc::add(e.spatial, e.time), e.user);
  return e;
}

}  // namespace red
