#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "red/seq2seq.hpp"
#include "red/simbaselines.hpp"

namespace red {

using CandidateId = std::int64_t;

/// Mean over queries of |top-k(pred) ∩ top-k(truth)| / k.
double hit_ratio(std::span<const std::vector<CandidateId>> truth, std::span<const std::vector<CandidateId>> predicted,
                 std::size_t k);

struct ScoredCandidate {
  CandidateId id = 0;
  double score = 0.0;
};

struct RankReport {
  double mean_rank = 0.0;
  std::vector<std::size_t> ranks;  // per evaluated query
  std::size_t evaluated = 0;
  std::size_t missing = 0;  // queries whose target was not among the candidates
};

/// 1-based rank of the target under descending score, ties broken by smaller
/// candidate id first. Queries whose target is absent are counted and skipped.
RankReport mean_rank(std::span<const CandidateId> targets, std::span<const std::vector<ScoredCandidate>> candidates);

/// Candidate ids ordered by descending score, ties by ascending id.
std::vector<CandidateId> rank_candidates(std::vector<ScoredCandidate> candidates);

/// Removes round(p * |steps|) interior steps chosen uniformly at random.
/// Endpoints always survive; when fewer interior steps exist than requested,
/// all are removed and a warning is logged.
PathTrajectory downsample(const PathTrajectory& traj, double p, std::uint64_t seed);

/// One [1 x dim] trajectory vector per row, in input order. Rows are
/// L2-normalized unless `normalize` is false.
Tensor embed_dataset(const RedModel& model, std::span<const PathTrajectory> trajectories,
                     const InputMode& mode = {}, bool normalize = true, std::size_t threads = 1);

struct ClassificationMetrics {
  std::size_t classes = 0;
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double recall_at_5 = 0.0;
  // Positive class 1; only meaningful when classes == 2.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// `scores` is [n x classes]; prediction is the arg-max (lowest index on ties).
ClassificationMetrics classification_metrics(const Tensor& scores, std::span<const std::int32_t> labels);

struct RegressionMetrics {
  double mae = 0.0;
  double mape = 0.0;  // percent, over non-zero targets only
  double rmse = 0.0;
  std::size_t count = 0;
  std::size_t mape_excluded = 0;
};

RegressionMetrics regression_metrics(std::span<const double> predicted, std::span<const double> target);

/// Queries Q, their downsampled twins Q' and the expanded database D' = Q' ∪ D.
/// Twins occupy the first |Q| database slots, so candidate ids 0..|Q|-1 are
/// the twins and ties resolve toward them.
struct RetrievalSetup {
  std::vector<PathTrajectory> queries;
  std::vector<PathTrajectory> database;
  std::vector<CandidateId> targets;
  double p = 0.0;
};

/// p == 0 inserts exact duplicates.
RetrievalSetup make_retrieval_setup(std::span<const PathTrajectory> queries, std::span<const PathTrajectory> others,
                                    double p, std::uint64_t seed);

/// Mean rank of each query's twin under inner-product scores.
RankReport retrieval_mean_rank(const Tensor& query_vectors, const Tensor& database_vectors,
                               std::span<const CandidateId> targets);

/// Top-k database rows per query by inner product (ties by row index).
std::vector<std::vector<CandidateId>> topk_by_embedding(const Tensor& query_vectors, const Tensor& database_vectors,
                                                        std::size_t k);

/// Top-k database sequences per query under a heuristic measure (closest
/// first; most similar first for LCSS), ties by index.
std::vector<std::vector<CandidateId>> topk_by_measure(std::span<const PointSeq> queries,
                                                      std::span<const PointSeq> database, Measure m, std::size_t k,
                                                      const MeasureParams& params = {}, std::size_t threads = 1);

}  // namespace red
