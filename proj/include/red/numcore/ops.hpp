#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "red/numcore/autograd.hpp"

namespace red::nc {

// Linear algebra.
Var matmul(const Var& a, const Var& b);
/// a * b^T without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
/// x * w + bias, with `bias` a 1 x n row broadcast over rows.
Var affine(const Var& x, const Var& w, const Var& bias);

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
Var add_rowvec(const Var& a, const Var& row);
Var sin(const Var& a);
Var relu(const Var& a);
Var elu(const Var& a, Real alpha = 1);
/// tanh approximation of the Gaussian error linear unit.
Var gelu(const Var& a);

// Shape.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
/// Row lookup; repeated indices accumulate gradient.
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
Var reshape(const Var& a, std::size_t rows, std::size_t cols);
/// Mean over `blocks` equal-width column groups: [n x blocks*d] -> [n x d].
Var average_column_blocks(const Var& a, std::size_t blocks);

/// Replaces entries where `mask` is nonzero with `value`; those entries get no gradient.
Var masked_fill(const Var& a, std::span<const char> mask, Real value);

/// Row-wise softmax with per-row max subtraction.
Var softmax_rows(const Var& x);
/// Softmax restricted to entries where `allowed` is nonzero; excluded entries
/// are exactly 0. Each row needs at least one allowed entry.
Var softmax_rows(const Var& x, std::span<const char> allowed);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps = 1e-5);

// Reductions and losses (all return 1 x 1).
Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over non-ignored rows of -log softmax(logits)[target].
Var cross_entropy(const Var& logits, std::span<const std::int32_t> targets, std::span<const char> ignore = {});
Var mse_loss(const Var& pred, const Tensor& target);

/// Inverted dropout: Bernoulli keep with probability 1 - p, scaled by 1/(1-p).
/// Identity when not training or p == 0.
Var dropout(const Var& a, Real p, std::mt19937_64& rng, bool training);

/// Neighbor lists for graph attention: sources[i] are the nodes whose
/// features node i aggregates (self included by the caller when wanted).
struct GraphAdjacency {
  std::vector<std::vector<std::size_t>> sources;
  std::size_t num_nodes() const noexcept { return sources.size(); }
};

/// Multi-head additive graph attention. `projected` is [N x heads*d],
/// `att_src`/`att_dst` are [1 x heads*d]. For each head, node i aggregates
/// alpha_ij * projected_j over sources(i), with alpha the softmax over
/// leaky_relu(att_src . projected_j + att_dst . projected_i). Heads come back
/// concatenated.
Var graph_attention(const Var& projected, const Var& att_src, const Var& att_dst, const GraphAdjacency& graph,
                    std::size_t heads, Real negative_slope = 0.2);

}  // namespace red::nc
