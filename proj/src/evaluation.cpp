#include "red/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <set>

#include "parallel.hpp"
#include "red/error.hpp"

namespace red {

double hit_ratio(std::span<const std::vector<CandidateId>> truth, std::span<const std::vector<CandidateId>> predicted,
                 std::size_t k) {
  if (k == 0) throw ValidationError("k must be positive");
  if (truth.size() != predicted.size()) throw ContractViolation("truth and prediction lists differ in length");
  if (truth.empty()) throw ValidationError("no queries to evaluate");
  double total = 0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    if (truth[q].size() < k || predicted[q].size() < k)
      throw ValidationError("k = " + std::to_string(k) + " exceeds the candidate list of query " + std::to_string(q));
    const std::set<CandidateId> expected(truth[q].begin(), truth[q].begin() + static_cast<std::ptrdiff_t>(k));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += expected.count(predicted[q][i]);
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / static_cast<double>(truth.size());
}

RankReport mean_rank(std::span<const CandidateId> targets, std::span<const std::vector<ScoredCandidate>> candidates) {
  if (targets.size() != candidates.size()) throw ContractViolation("targets and candidate lists differ in length");
  RankReport report;
  double total = 0;
  for (std::size_t q = 0; q < targets.size(); ++q) {
    const auto& list = candidates[q];
    const auto it = std::find_if(list.begin(), list.end(), [&](const auto& c) { return c.id == targets[q]; });
    if (it == list.end()) {
      ++report.missing;
      continue;
    }
    std::size_t rank = 1;
    for (const auto& c : list)
      if (c.score > it->score || (c.score == it->score && c.id < it->id)) ++rank;
    report.ranks.push_back(rank);
    total += static_cast<double>(rank);
  }
  report.evaluated = report.ranks.size();
  if (report.evaluated > 0) report.mean_rank = total / static_cast<double>(report.evaluated);
  return report;
}

std::vector<CandidateId> rank_candidates(std::vector<ScoredCandidate> candidates) {
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  std::vector<CandidateId> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(c.id);
  return out;
}

PathTrajectory downsample(const PathTrajectory& traj, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("downsampling rate must lie in (0, 1)");
  const auto n = traj.steps.size();
  if (n < 2) throw ValidationError("downsampling needs at least two steps");
  auto removals = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
  if (removals > n - 2) {
    std::clog << "warning: trajectory " << traj.id << " keeps only its endpoints after downsampling\n";
    removals = n - 2;
  }
  std::vector<std::size_t> interior(n - 2);
  std::iota(interior.begin(), interior.end(), std::size_t{1});
  std::mt19937_64 rng(seed);
  std::shuffle(interior.begin(), interior.end(), rng);
  std::vector<char> drop(n, 0);
  for (std::size_t i = 0; i < removals; ++i) drop[interior[i]] = 1;
  PathTrajectory out{traj.id, traj.user, {}};
  out.steps.reserve(n - removals);
  for (std::size_t i = 0; i < n; ++i)
    if (!drop[i]) out.steps.push_back(traj.steps[i]);
  return out;
}

Tensor embed_dataset(const RedModel& model, std::span<const PathTrajectory> trajectories, const InputMode& mode,
                     bool normalize, std::size_t threads) {
  const InferenceSession session(model, mode);
  const auto dim = model.config().dim;
  Tensor out(trajectories.size(), dim);
  detail::parallel_chunks(trajectories.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto v = session.represent(trajectories[i]);
      if (normalize) {
        double norm = 0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0)
          for (double& x : v) x /= norm;
      }
      std::copy(v.begin(), v.end(), out.row_ptr(i));
    }
  });
  return out;
}

ClassificationMetrics classification_metrics(const Tensor& scores, std::span<const std::int32_t> labels) {
  const auto n = scores.rows();
  const auto classes = scores.cols();
  if (n != labels.size()) throw ContractViolation("score rows and labels differ in length");
  if (n == 0) throw ValidationError("no samples to evaluate");
  if (classes < 2) throw ValidationError("classification needs at least two classes");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  std::vector<char> seen(classes, 0);
  std::size_t correct = 0, top5 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
      throw ValidationError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    const double* row = scores.row_ptr(i);
    const auto pred = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    const auto truth = static_cast<std::size_t>(label);
    seen[truth] = seen[pred] = 1;
    if (pred == truth) {
      ++correct;
      ++tp[truth];
    } else {
      ++fp[pred];
      ++fn[truth];
    }
    std::size_t better = 0;
    for (std::size_t c = 0; c < classes; ++c)
      if (row[c] > row[truth] || (row[c] == row[truth] && c < truth)) ++better;
    if (better < 5) ++top5;
  }
  const auto f1_of = [&](std::size_t c) {
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    return denom > 0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  };
  ClassificationMetrics m;
  m.classes = classes;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  m.micro_f1 = m.accuracy;
  m.recall_at_5 = static_cast<double>(top5) / static_cast<double>(n);
  double macro = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c)
    if (seen[c]) {
      macro += f1_of(c);
      ++present;
    }
  m.macro_f1 = present ? macro / static_cast<double>(present) : 0.0;
  if (classes == 2) {
    const double p_denom = static_cast<double>(tp[1] + fp[1]);
    const double r_denom = static_cast<double>(tp[1] + fn[1]);
    m.precision = p_denom > 0 ? static_cast<double>(tp[1]) / p_denom : 0.0;
    m.recall = r_denom > 0 ? static_cast<double>(tp[1]) / r_denom : 0.0;
    m.f1 = f1_of(1);
  }
  return m;
}

RegressionMetrics regression_metrics(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size()) throw ContractViolation("predictions and targets differ in length");
  if (predicted.empty()) throw ValidationError("no samples to evaluate");
  RegressionMetrics m;
  m.count = predicted.size();
  double abs_sum = 0, sq_sum = 0, pct_sum = 0;
  std::size_t pct_n = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double err = predicted[i] - target[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (target[i] != 0.0) {
      pct_sum += std::abs(err / target[i]);
      ++pct_n;
    }
  }
  const auto n = static_cast<double>(m.count);
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.mape = pct_n ? pct_sum / static_cast<double>(pct_n) * 100.0 : 0.0;
  m.mape_excluded = m.count - pct_n;
  return m;
}

RetrievalSetup make_retrieval_setup(std::span<const PathTrajectory> queries, std::span<const PathTrajectory> others,
                                    double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("downsampling rate must lie in [0, 1)");
  RetrievalSetup setup;
  setup.p = p;
  setup.queries.assign(queries.begin(), queries.end());
  setup.database.reserve(queries.size() + others.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    setup.database.push_back(p == 0.0 ? queries[i] : downsample(queries[i], p, seed + i));
    setup.targets.push_back(static_cast<CandidateId>(i));
  }
  setup.database.insert(setup.database.end(), others.begin(), others.end());
  return setup;
}

namespace {

std::vector<ScoredCandidate> inner_products(const Tensor& queries, std::size_t q, const Tensor& database) {
  std::vector<ScoredCandidate> out(database.rows());
  const double* a = queries.row_ptr(q);
  for (std::size_t r = 0; r < database.rows(); ++r) {
    const double* b = database.row_ptr(r);
    double dot = 0;
    for (std::size_t c = 0; c < database.cols(); ++c) dot += a[c] * b[c];
    out[r] = {static_cast<CandidateId>(r), dot};
  }
  return out;
}

void check_dims(const Tensor& queries, const Tensor& database) {
  if (queries.cols() != database.cols())
    throw ValidationError("query dim " + std::to_string(queries.cols()) + " differs from database dim " +
                          std::to_string(database.cols()));
}

}  // namespace

RankReport retrieval_mean_rank(const Tensor& query_vectors, const Tensor& database_vectors,
                               std::span<const CandidateId> targets) {
  check_dims(query_vectors, database_vectors);
  if (targets.size() != query_vectors.rows()) throw ContractViolation("one target per query expected");
  std::vector<std::vector<ScoredCandidate>> scored(query_vectors.rows());
  for (std::size_t q = 0; q < scored.size(); ++q) scored[q] = inner_products(query_vectors, q, database_vectors);
  return mean_rank(targets, scored);
}

std::vector<std::vector<CandidateId>> topk_by_embedding(const Tensor& query_vectors, const Tensor& database_vectors,
                                                        std::size_t k) {
  check_dims(query_vectors, database_vectors);
  if (k > database_vectors.rows()) throw ValidationError("k exceeds the database size");
  std::vector<std::vector<CandidateId>> out(query_vectors.rows());
  for (std::size_t q = 0; q < out.size(); ++q) {
    out[q] = rank_candidates(inner_products(query_vectors, q, database_vectors));
    out[q].resize(k);
  }
  return out;
}

std::vector<std::vector<CandidateId>> topk_by_measure(std::span<const PointSeq> queries,
                                                      std::span<const PointSeq> database, Measure m, std::size_t k,
                                                      const MeasureParams& params, std::size_t threads) {
  if (k > database.size()) throw ValidationError("k exceeds the database size");
  std::vector<std::vector<CandidateId>> out(queries.size());
  const double sign = is_similarity(m) ? 1.0 : -1.0;
  detail::parallel_chunks(queries.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      std::vector<ScoredCandidate> scored(database.size());
      for (std::size_t r = 0; r < database.size(); ++r)
        scored[r] = {static_cast<CandidateId>(r), sign * evaluate_measure(m, queries[q], database[r], params)};
      out[q] = rank_candidates(std::move(scored));
      out[q].resize(k);
    }
  });
  return out;
}

}  // namespace red
