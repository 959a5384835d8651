#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ticl/error.hpp"

namespace ticl {

/// methods x datasets x seeds score tensor. `higher_better` records the
/// metric orientation per dataset (accuracy up, RMSE down).
struct ScoreTable {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  std::vector<bool> higher_better;
  std::vector<std::vector<std::vector<double>>> scores;  // [method][dataset][seed]
  std::vector<std::vector<bool>> failed;                 // [method][dataset]

  int64_t n_methods() const { return static_cast<int64_t>(methods.size()); }
  int64_t n_datasets() const { return static_cast<int64_t>(datasets.size()); }

  void require_complete() const {
    for (size_t m = 0; m < failed.size(); ++m)
      for (size_t d = 0; d < failed[m].size(); ++d)
        if (failed[m][d])
          throw StatisticError("statistics refuse to run: method " + methods[m] +
                               " failed on dataset " + datasets[d]);
    for (size_t m = 0; m < scores.size(); ++m)
      for (size_t d = 0; d < scores[m].size(); ++d)
        if (scores[m][d].empty())
          throw StatisticError("statistics refuse to run: empty cell for " + methods[m] + " on " +
                               datasets[d]);
  }

  double seed_mean(int64_t m, int64_t d) const {
    const auto& s = scores[static_cast<size_t>(m)][static_cast<size_t>(d)];
    double acc = 0.0;
    for (double v : s) acc += v;
    return acc / static_cast<double>(s.size());
  }
};

/// Mid-rank ranking of values (rank 1 = best). `descending` ranks larger
/// values better.
inline std::vector<double> midranks(const std::vector<double>& values, bool descending) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return descending ? values[a] > values[b] : values[a] < values[b];
  });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = mid;
    i = j + 1;
  }
  return ranks;
}

/// Per-method mean rank over datasets (rank 1 = best on a dataset; ties get
/// the mean of the tied ranks).
inline std::vector<double> average_rank(const ScoreTable& t) {
  t.require_complete();
  check(t.n_methods() >= 1 && t.n_datasets() >= 1, "average_rank: empty table");
  std::vector<double> mean_rank(static_cast<size_t>(t.n_methods()), 0.0);
  for (int64_t d = 0; d < t.n_datasets(); ++d) {
    std::vector<double> means(static_cast<size_t>(t.n_methods()));
    for (int64_t m = 0; m < t.n_methods(); ++m) means[static_cast<size_t>(m)] = t.seed_mean(m, d);
    auto ranks = midranks(means, t.higher_better[static_cast<size_t>(d)]);
    for (int64_t m = 0; m < t.n_methods(); ++m) mean_rank[static_cast<size_t>(m)] += ranks[static_cast<size_t>(m)];
  }
  for (double& r : mean_rank) r /= static_cast<double>(t.n_datasets());
  return mean_rank;
}

/// Probability of achieving the best score; datasets with ties split their
/// credit equally, so the column sums to exactly one.
inline std::vector<double> pama(const ScoreTable& t) {
  t.require_complete();
  check(t.n_methods() >= 1 && t.n_datasets() >= 1, "pama: empty table");
  std::vector<double> out(static_cast<size_t>(t.n_methods()), 0.0);
  for (int64_t d = 0; d < t.n_datasets(); ++d) {
    const bool hb = t.higher_better[static_cast<size_t>(d)];
    double best = t.seed_mean(0, d);
    for (int64_t m = 1; m < t.n_methods(); ++m) {
      double v = t.seed_mean(m, d);
      if (hb ? v > best : v < best) best = v;
    }
    std::vector<int64_t> winners;
    for (int64_t m = 0; m < t.n_methods(); ++m)
      if (t.seed_mean(m, d) == best) winners.push_back(m);
    for (int64_t m : winners)
      out[static_cast<size_t>(m)] += 1.0 / static_cast<double>(winners.size());
  }
  for (double& v : out) v /= static_cast<double>(t.n_datasets());
  return out;
}

/// Two-sided Wilcoxon signed-rank p-value. Zero differences are dropped;
/// tied magnitudes get mid-ranks. The null distribution is exact (dynamic
/// program over doubled ranks) for n <= 20 and a tie-corrected normal
/// approximation above. Returns NaN when every difference is zero.
inline double wilcoxon_signed_rank_p(const std::vector<double>& diffs) {
  std::vector<double> mags;
  std::vector<int> signs;
  for (double d : diffs)
    if (d != 0.0) {
      mags.push_back(std::abs(d));
      signs.push_back(d > 0 ? 1 : -1);
    }
  const int64_t n = static_cast<int64_t>(mags.size());
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();

  auto ranks = midranks(mags, false);
  double w_plus = 0.0;
  for (size_t i = 0; i < mags.size(); ++i)
    if (signs[i] > 0) w_plus += ranks[i];

  if (n <= 20) {
    // doubled ranks are integers even under mid-rank ties
    std::vector<int64_t> r2(static_cast<size_t>(n));
    int64_t total = 0;
    for (int64_t i = 0; i < n; ++i) {
      r2[static_cast<size_t>(i)] = static_cast<int64_t>(std::llround(2.0 * ranks[static_cast<size_t>(i)]));
      total += r2[static_cast<size_t>(i)];
    }
    std::vector<double> count(static_cast<size_t>(total + 1), 0.0);
    count[0] = 1.0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t s = total; s >= r2[static_cast<size_t>(i)]; --s)
        count[static_cast<size_t>(s)] += count[static_cast<size_t>(s - r2[static_cast<size_t>(i)])];
    const double denom = std::pow(2.0, static_cast<double>(n));
    const int64_t w2 = static_cast<int64_t>(std::llround(2.0 * w_plus));
    double below = 0.0, above = 0.0;
    for (int64_t s = 0; s <= total; ++s) {
      if (s <= w2) below += count[static_cast<size_t>(s)];
      if (s >= w2) above += count[static_cast<size_t>(s)];
    }
    return std::min(1.0, 2.0 * std::min(below, above) / denom);
  }

  // normal approximation with tie correction
  const double mu = static_cast<double>(n) * (n + 1) / 4.0;
  double tie_term = 0.0;
  {
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    size_t i = 0;
    while (i < sorted.size()) {
      size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      double tcount = static_cast<double>(j - i + 1);
      tie_term += tcount * tcount * tcount - tcount;
      i = j + 1;
    }
  }
  const double var = static_cast<double>(n) * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
  const double z = (w_plus - mu) / std::sqrt(var);
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

struct PairResult {
  int64_t a = 0, b = 0;
  double p = 1.0;
  double p_adjusted = 1.0;
  bool rejected = false;
  bool incomparable = false;
};

struct WilcoxonHolmResult {
  std::vector<PairResult> pairs;
  std::vector<std::vector<int64_t>> cliques;  // non-distinguishable method groups
  std::vector<double> mean_rank;
  double alpha = 0.05;
};

/// Holm step-down over the comparable pairs, in place.
inline void holm_adjust(std::vector<PairResult>& pairs, double alpha) {
  std::vector<size_t> order;
  for (size_t i = 0; i < pairs.size(); ++i)
    if (!pairs[i].incomparable) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t x, size_t y) { return pairs[x].p < pairs[y].p; });
  const size_t m = order.size();
  double running = 0.0;
  bool stopped = false;
  for (size_t rank = 0; rank < m; ++rank) {
    PairResult& pr = pairs[order[rank]];
    running = std::max(running, static_cast<double>(m - rank) * pr.p);
    pr.p_adjusted = std::min(1.0, running);
    if (!stopped && pr.p <= alpha / static_cast<double>(m - rank)) {
      pr.rejected = true;
    } else {
      stopped = true;
      pr.rejected = false;
    }
  }
}

/// Pairwise two-sided Wilcoxon signed-rank tests on per-dataset seed-averaged
/// scores (differences oriented so positive favors the first method), with
/// Holm correction and critical-difference groupings.
inline WilcoxonHolmResult wilcoxon_holm(const ScoreTable& t, double alpha = 0.05) {
  t.require_complete();
  check(t.n_datasets() >= 6, "wilcoxon_holm: need at least 6 datasets");
  check(t.n_methods() >= 2, "wilcoxon_holm: need at least 2 methods");
  WilcoxonHolmResult res;
  res.alpha = alpha;
  res.mean_rank = average_rank(t);
  for (int64_t a = 0; a < t.n_methods(); ++a)
    for (int64_t b = a + 1; b < t.n_methods(); ++b) {
      PairResult pr;
      pr.a = a;
      pr.b = b;
      std::vector<double> diffs;
      for (int64_t d = 0; d < t.n_datasets(); ++d) {
        double va = t.seed_mean(a, d), vb = t.seed_mean(b, d);
        diffs.push_back(t.higher_better[static_cast<size_t>(d)] ? va - vb : vb - va);
      }
      pr.p = wilcoxon_signed_rank_p(diffs);
      if (std::isnan(pr.p)) {
        pr.incomparable = true;
        pr.p = 1.0;
        pr.p_adjusted = 1.0;
      }
      res.pairs.push_back(pr);
    }
  holm_adjust(res.pairs, alpha);

  // maximal cliques of mutually indistinguishable methods, by rank order
  std::vector<size_t> by_rank(static_cast<size_t>(t.n_methods()));
  for (size_t i = 0; i < by_rank.size(); ++i) by_rank[i] = i;
  std::stable_sort(by_rank.begin(), by_rank.end(),
                   [&](size_t x, size_t y) { return res.mean_rank[x] < res.mean_rank[y]; });
  auto distinguishable = [&](int64_t x, int64_t y) {
    for (const PairResult& pr : res.pairs)
      if ((pr.a == x && pr.b == y) || (pr.a == y && pr.b == x)) return pr.rejected;
    return false;
  };
  std::vector<std::pair<size_t, size_t>> spans;
  for (size_t i = 0; i < by_rank.size(); ++i) {
    size_t j = i;
    while (j + 1 < by_rank.size()) {
      bool ok = true;
      for (size_t t2 = i; t2 <= j && ok; ++t2)
        if (distinguishable(static_cast<int64_t>(by_rank[t2]),
                            static_cast<int64_t>(by_rank[j + 1])))
          ok = false;
      if (!ok) break;
      ++j;
    }
    spans.emplace_back(i, j);
  }
  for (auto [i, j] : spans) {
    bool contained = false;
    for (auto [i2, j2] : spans)
      if ((i2 < i && j2 >= j) || (i2 <= i && j2 > j)) contained = true;
    if (contained) continue;
    std::vector<int64_t> group;
    for (size_t t2 = i; t2 <= j; ++t2) group.push_back(static_cast<int64_t>(by_rank[t2]));
    res.cliques.push_back(group);
  }
  return res;
}

inline nlohmann::json stats_to_json(const ScoreTable& t, const WilcoxonHolmResult& res) {
  nlohmann::json j;
  j["alpha"] = res.alpha;
  j["methods"] = t.methods;
  j["mean_rank"] = res.mean_rank;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& pr : res.pairs)
    pairs.push_back({{"a", t.methods[static_cast<size_t>(pr.a)]},
                     {"b", t.methods[static_cast<size_t>(pr.b)]},
                     {"p", pr.p},
                     {"p_holm", pr.p_adjusted},
                     {"rejected", pr.rejected},
                     {"incomparable", pr.incomparable}});
  j["pairs"] = pairs;
  nlohmann::json cliques = nlohmann::json::array();
  for (const auto& group : res.cliques) {
    nlohmann::json names = nlohmann::json::array();
    for (int64_t m : group) names.push_back(t.methods[static_cast<size_t>(m)]);
    cliques.push_back(names);
  }
  j["cd_groups"] = cliques;
  return j;
}

}  // namespace ticl
