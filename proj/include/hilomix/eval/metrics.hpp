#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "hilomix/error.hpp"
#include "hilomix/graph/hamig.hpp"
#include "hilomix/rng.hpp"

namespace hilomix::eval {

inline void check_lengths(std::size_t a, std::size_t b, const char* who) {
  if (a != b) throw DimensionError(std::string(who) + ": " + std::to_string(a) + " scores, " + std::to_string(b) + " labels");
}

/// F1 of the positive class with score >= threshold predicted positive. With
/// no predicted and no actual positives the value is 0.
inline double f1_score(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  check_lengths(scores.size(), labels.size(), "f1_score");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const bool pred = scores[k] >= threshold;
    if (pred && labels[k] == 1) ++tp;
    else if (pred) ++fp;
    else if (labels[k] == 1) ++fn;
  }
  const double denom = 2 * tp + fp + fn;
  return denom > 0 ? 2 * tp / denom : 0.0;
}

/// Mann-Whitney AUC with midranks for tied scores.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size(), "auc");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0, rank_sum = 0;
  for (std::size_t lo = 0; lo < idx.size();) {
    std::size_t hi = lo;
    while (hi < idx.size() && scores[idx[hi]] == scores[idx[lo]]) ++hi;
    const double mid = 0.5 * static_cast<double>(lo + 1 + hi);
    for (std::size_t k = lo; k < hi; ++k)
      if (labels[idx[k]] == 1) rank_sum += mid, ++n_pos;
    lo = hi;
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc needs both classes");
  return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

struct RankingTask {
  double positive = 0.0;
  std::vector<double> negatives;
};

/// 1 + (#negatives scoring higher) + (#tied)/2: the mean rank of the
/// positive's tie group.
inline double rank_of(const RankingTask& t) {
  double above = 0, tied = 0;
  for (double s : t.negatives) {
    if (s > t.positive) ++above;
    else if (s == t.positive) ++tied;
  }
  return 1.0 + above + tied / 2.0;
}

inline double mrr(std::span<const RankingTask> tasks) {
  if (tasks.empty()) return 0.0;
  double s = 0;
  for (const auto& t : tasks) s += 1.0 / rank_of(t);
  return s / static_cast<double>(tasks.size());
}

inline double hits_at_k(std::span<const RankingTask> tasks, int k) {
  if (tasks.empty()) return 0.0;
  double s = 0;
  for (const auto& t : tasks) s += rank_of(t) <= k;
  return s / static_cast<double>(tasks.size());
}

/// Candidate pairs for one positive: the positive first, then negatives that
/// share its first endpoint.
struct RankingCandidates {
  graph::LabeledPair positive;
  std::vector<graph::LabeledPair> negatives;
};

/// For each positive (a, b), draws `n_negatives` distinct accounts k with
/// (a, k) not an association of `g`. Fewer are returned only when fewer exist.
inline std::vector<RankingCandidates> build_ranking_candidates(const graph::Hamig& g,
                                                               std::span<const graph::LabeledPair> positives,
                                                               std::size_t n_negatives, std::uint64_t seed) {
  std::unordered_set<std::uint64_t> labeled;
  for (const auto& p : g.associations) labeled.insert(graph::pair_key(p.a, p.b));
  Rng rng = make_rng(seed, 0x4a4c);
  const std::size_t na = g.n_accounts();
  std::vector<RankingCandidates> out;
  for (const auto& pos : positives) {
    RankingCandidates c{pos, {}};
    const std::uint32_t a = pos.a;
    std::vector<std::uint32_t> pool;
    for (std::uint32_t k = 0; k < na; ++k)
      if (k != a && !labeled.contains(graph::pair_key(a, k))) pool.push_back(k);
    const std::size_t take = std::min(n_negatives, pool.size());
    for (std::size_t s = 0; s < take; ++s) {
      std::swap(pool[s], pool[s + uniform_index(rng, pool.size() - s)]);
      const auto [i, j] = graph::canonical(a, pool[s]);
      c.negatives.push_back({i, j, 0});
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct MetricsReport {
  double f1 = 0, auc = 0, mrr = 0, hits3 = 0, hits5 = 0, hits10 = 0;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"f1", f1}, {"auc", auc}, {"mrr", mrr}, {"hits@3", hits3}, {"hits@5", hits5}, {"hits@10", hits10}};
  }
  static MetricsReport from_json(const nlohmann::json& j) {
    auto f = [&](const char* k) { return j.at(k).get<double>(); };
    return {f("f1"), f("auc"), f("mrr"), f("hits@3"), f("hits@5"), f("hits@10")};
  }
};

inline MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                                     std::span<const RankingTask> tasks) {
  return {f1_score(scores, labels), auc(scores, labels), mrr(tasks),
          hits_at_k(tasks, 3), hits_at_k(tasks, 5), hits_at_k(tasks, 10)};
}

struct MeanStd {
  double mean = 0, std = 0;
};

/// Mean and sample standard deviation (n - 1); std is 0 for one value.
inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) throw ContractError("mean_std of an empty list");
  MeanStd r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0;
    for (double x : v) s += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace hilomix::eval
