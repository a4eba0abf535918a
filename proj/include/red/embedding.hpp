#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "red/numcore/layers.hpp"
#include "red/roadnet.hpp"
#include "red/trajdata.hpp"

namespace red {

using nc::Tensor;
using nc::Var;

/// Aggregation neighborhoods for the spatial encoder: a real segment attends
/// to itself and its real predecessors; the virtual START node attends to
/// itself and every real segment.
nc::GraphAdjacency spatial_adjacency(const RoadNetwork& net);

/// [(|V|+1) x 12] initial features, virtual START node last.
Tensor node_features(const RoadNetwork& net);

/// Graph attention stack. Hidden layers concatenate `heads[k]` heads of width
/// dim/heads[k] and apply ELU; the last layer averages its heads.
class GatStack {
 public:
  GatStack() = default;
  GatStack(nc::ParameterStore& store, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
           std::vector<std::size_t> heads, std::mt19937_64& rng);

  Var forward(const Tensor& features, const nc::GraphAdjacency& graph) const;
  const std::vector<std::size_t>& heads() const noexcept { return heads_; }
  std::size_t out_dim() const noexcept { return out_dim_; }

 private:
  struct Layer {
    nc::ParameterPtr weight, att_src, att_dst, bias;
    std::size_t heads;
    bool concat;
  };
  std::vector<Layer> layers_;
  std::vector<std::size_t> heads_;
  std::size_t out_dim_ = 0;
};

/// [hour/23, minute/59, second/59, (year-2000)/100, (month-1)/11, (day-1)/30] in UTC.
std::array<double, 6> time_vector(std::int64_t timestamp);

/// t = FC(FC1(v) || sin(FC2(v)) || E^p[type]) with v the 6-dim time vector.
class TimeEncoder {
 public:
  TimeEncoder() = default;
  TimeEncoder(nc::ParameterStore& store, const std::string& prefix, std::size_t dim, std::mt19937_64& rng);

  /// Rows of `time_vectors` ([n x 6]) pair with `types`.
  Var forward(const Tensor& time_vectors, std::span<const SegmentType> types) const;
  Var encode(std::int64_t timestamp, SegmentType type) const;

  nc::Linear fc1, fc2, fusion;
  nc::ParameterPtr type_table;  // [8 x dim/2]
};

class UserTable {
 public:
  UserTable() = default;
  UserTable(nc::ParameterStore& store, const std::string& name, std::size_t users, std::size_t dim,
            std::mt19937_64& rng);

  /// `rows` copies of the user's row; zeros for kUnknownUser.
  Var lookup(UserId user, std::size_t rows) const;
  std::size_t size() const { return table->value().rows(); }

  nc::ParameterPtr table;
};

struct EmbedOptions {
  bool use_user = true;
  /// Keep the time encoding only on the first (departure) step.
  bool departure_time_only = false;
};

/// x_i = h_i + t_i + u_i per step, with the three parts kept for reuse.
struct StepEmbedding {
  Var spatial;
  Var time;
  Var user;
  Var joint;
};

StepEmbedding joint_embed(const PathTrajectory& traj, const RoadNetwork& net, const Var& spatial_table,
                          const TimeEncoder& time_encoder, const UserTable& users, const EmbedOptions& options);

}  // namespace red
