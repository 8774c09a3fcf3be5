#pragma once

// Evaluation protocols: repeated random-split 1NN classification in the
// embedded space, L1-distance retrieval metrics and lambda sweeps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmsre/embedding.hpp"
#include "cmsre/error.hpp"
#include "cmsre/pipeline.hpp"
#include "cmsre/random.hpp"

namespace cmsre {

struct SplitPlan {
  std::uint64_t seed = 0;
  Index sample_count = 0;
  Index test_count = 0;
  std::vector<std::vector<Index>> test_indices;  // sorted, one list per trial

  int trials() const { return static_cast<int>(test_indices.size()); }
};

inline SplitPlan make_split_plan(Index n, int trials, Index test_count, std::uint64_t seed) {
  if (trials < 1) throw input_error("trials must be >= 1");
  if (test_count < 1 || test_count >= n)
    throw input_error("test_count must be in [1, n-1], got " + std::to_string(test_count));
  SplitPlan plan{seed, n, test_count, {}};
  Rng rng(seed);
  std::vector<Index> perm(n);
  for (int t = 0; t < trials; ++t) {
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(perm);
    std::vector<Index> test(perm.begin(), perm.begin() + test_count);
    std::sort(test.begin(), test.end());
    plan.test_indices.push_back(std::move(test));
  }
  return plan;
}

/// Labels each test column with its nearest (Euclidean) training column,
/// ties going to the lower training index, and returns the hit rate.
inline double knn_classify_1nn(const Eigen::MatrixXd& y, const std::vector<int>& labels,
                               const std::vector<Index>& test) {
  const Index n = y.cols();
  if (static_cast<Index>(labels.size()) != n) throw input_error("labels do not match embedding");
  if (test.empty()) throw input_error("empty test set");
  std::vector<char> is_test(n, 0);
  for (Index t : test) {
    if (t < 0 || t >= n) throw input_error("test index out of range");
    is_test[t] = 1;
  }
  std::vector<Index> train;
  for (Index i = 0; i < n; ++i)
    if (!is_test[i]) train.push_back(i);
  if (train.empty()) throw input_error("empty training set");

  Index correct = 0;
  for (Index q : test) {
    double best = std::numeric_limits<double>::infinity();
    Index best_idx = train.front();
    for (Index j : train) {
      const double dist = (y.col(q) - y.col(j)).squaredNorm();
      if (dist < best) {
        best = dist;
        best_idx = j;
      }
    }
    if (labels[best_idx] == labels[q]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

enum class ViewPolicy { per_view_best, concatenate };

inline ViewPolicy parse_view_policy(const std::string& s) {
  if (s == "best" || s == "per_view_best") return ViewPolicy::per_view_best;
  if (s == "concat" || s == "concatenate") return ViewPolicy::concatenate;
  throw input_error("unknown view policy '" + s + "'");
}

inline std::string to_string(ViewPolicy p) {
  return p == ViewPolicy::per_view_best ? "best" : "concat";
}

struct ClassificationReport {
  std::vector<double> per_trial_accuracy;
  /// Winning view per trial under per_view_best, -1 for concatenate.
  std::vector<int> per_trial_view;
  double mean = 0.0;
  double max = 0.0;
  ViewPolicy policy = ViewPolicy::concatenate;
  Termination termination = Termination::iteration_cap;
  int sweeps = 0;
};

/// Classification over a fitted model. The fit is transductive and does
/// not depend on the split, so one fit serves every trial.
inline ClassificationReport evaluate_classification(const FitResult& fit,
                                                    const std::vector<int>& labels,
                                                    const SplitPlan& split, ViewPolicy policy) {
  if (labels.empty()) throw input_error("classification needs a labeled dataset");
  ClassificationReport rep;
  rep.policy = policy;
  rep.termination = fit.termination;
  rep.sweeps = fit.trace.empty() ? 0 : fit.trace.back().iteration;

  const Eigen::MatrixXd stacked =
      policy == ViewPolicy::concatenate ? stack_embeddings(fit.embeddings) : Eigen::MatrixXd();
  for (const auto& test : split.test_indices) {
    if (policy == ViewPolicy::concatenate) {
      rep.per_trial_accuracy.push_back(knn_classify_1nn(stacked, labels, test));
      rep.per_trial_view.push_back(-1);
    } else {
      double best = -1.0;
      int best_view = 0;
      for (std::size_t v = 0; v < fit.embeddings.size(); ++v) {
        const double acc = knn_classify_1nn(fit.embeddings[v].Y, labels, test);
        if (acc > best) {
          best = acc;
          best_view = static_cast<int>(v);
        }
      }
      rep.per_trial_accuracy.push_back(best);
      rep.per_trial_view.push_back(best_view);
    }
  }
  const auto& acc = rep.per_trial_accuracy;
  rep.mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
  rep.max = *std::max_element(acc.begin(), acc.end());
  return rep;
}

inline ClassificationReport evaluate_classification(const MultiViewDataset& ds,
                                                    const PipelineConfig& cfg,
                                                    const SplitPlan& split, ViewPolicy policy) {
  if (!ds.labeled()) throw input_error("classification needs a labeled dataset");
  const PreparedViews prepared = prepare_views(ds, cfg);
  return evaluate_classification(fit_cmsre(prepared.operators, cfg.cmsre), ds.labels, split,
                                 policy);
}

struct RetrievalReport {
  double precision_at_n = 0.0;
  double recall_at_n = 0.0;
  double map = 0.0;
  double f1 = 0.0;
  /// Fixed cutoff, or 0 when each query uses its relevant-set size.
  Index cutoff = 0;
  Index evaluated_queries = 0;
  Index skipped_queries = 0;
};

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Ranks all other samples by ascending L1 distance to each query (ties by
/// lower index). Queries with empty relevant sets are skipped and counted.
inline RetrievalReport retrieve(const Eigen::MatrixXd& y, const std::vector<Index>& queries,
                                const std::vector<std::vector<Index>>& relevant,
                                std::optional<Index> cutoff = std::nullopt) {
  if (queries.size() != relevant.size())
    throw input_error("retrieve: one relevant set per query required");
  if (cutoff && *cutoff < 1) throw input_error("retrieval cutoff must be >= 1");
  const Index n = y.cols();
  RetrievalReport rep;
  rep.cutoff = cutoff.value_or(0);

  std::vector<Index> order;
  std::vector<double> dist(n);
  std::vector<char> is_rel(n);
  double sum_p = 0.0, sum_r = 0.0, sum_ap = 0.0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const Index q = queries[qi];
    if (q < 0 || q >= n) throw input_error("query index out of range");
    std::fill(is_rel.begin(), is_rel.end(), 0);
    Index rel_count = 0;
    for (Index r : relevant[qi]) {
      if (r < 0 || r >= n) throw input_error("relevant index out of range");
      if (r == q) throw input_error("relevant set of query " + std::to_string(q) + " contains the query");
      if (!is_rel[r]) ++rel_count;
      is_rel[r] = 1;
    }
    if (rel_count == 0) {
      ++rep.skipped_queries;
      continue;
    }

    for (Index j = 0; j < n; ++j) dist[j] = (y.col(q) - y.col(j)).lpNorm<1>();
    order.clear();
    for (Index j = 0; j < n; ++j)
      if (j != q) order.push_back(j);
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return dist[a] < dist[b]; });

    const Index cut = std::min<Index>(cutoff.value_or(rel_count), static_cast<Index>(order.size()));
    Index hits = 0, hits_at_cut = 0;
    double ap = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (is_rel[order[rank]]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
      if (static_cast<Index>(rank + 1) == cut) hits_at_cut = hits;
    }
    sum_p += static_cast<double>(hits_at_cut) / static_cast<double>(cutoff.value_or(rel_count));
    sum_r += static_cast<double>(hits_at_cut) / static_cast<double>(rel_count);
    sum_ap += ap / static_cast<double>(rel_count);
    ++rep.evaluated_queries;
  }
  if (rep.evaluated_queries > 0) {
    const double q = static_cast<double>(rep.evaluated_queries);
    rep.precision_at_n = sum_p / q;
    rep.recall_at_n = sum_r / q;
    rep.map = sum_ap / q;
  }
  rep.f1 = f1_score(rep.precision_at_n, rep.recall_at_n);
  return rep;
}

/// Relevant set of each query: every other sample sharing its label.
inline std::vector<std::vector<Index>> relevance_from_labels(const std::vector<int>& labels,
                                                             const std::vector<Index>& queries) {
  std::vector<std::vector<Index>> out;
  for (Index q : queries) {
    std::vector<Index> rel;
    for (Index j = 0; j < static_cast<Index>(labels.size()); ++j)
      if (j != q && labels[j] == labels[q]) rel.push_back(j);
    out.push_back(std::move(rel));
  }
  return out;
}

struct SweepRow {
  double lambda = 0.0;
  double mean_accuracy = 0.0;
  double max_accuracy = 0.0;
  int trials = 0;
};

/// One classification run per lambda. Codes and operators do not depend on
/// lambda and are computed once.
inline std::vector<SweepRow> sweep_lambda(const MultiViewDataset& ds,
                                          const std::vector<double>& lambdas,
                                          const PipelineConfig& base, const SplitPlan& split,
                                          ViewPolicy policy) {
  if (!ds.labeled()) throw input_error("lambda sweep needs a labeled dataset");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw input_error("lambda values must be >= 0");
  const PreparedViews prepared = prepare_views(ds, base);
  std::vector<SweepRow> rows;
  for (double l : lambdas) {
    CmsreConfig cfg = base.cmsre;
    cfg.lambda = l;
    const auto rep =
        evaluate_classification(fit_cmsre(prepared.operators, cfg), ds.labels, split, policy);
    rows.push_back({l, rep.mean, rep.max, split.trials()});
  }
  return rows;
}

}  // namespace cmsre
