#pragma once

// Independent brute-force reference implementations of the evaluation metrics.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "mcaae/metrics.hpp"

namespace mcaae::testing {

/// O(n m) pairwise comparison: P(pos > neg) + 0.5 P(pos == neg).
inline double auroc_pairwise(const ScoredPopulations& p) {
  double wins = 0;
  for (double a : p.positive_scores) {
    for (double b : p.negative_scores) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(p.positive_scores.size()) * static_cast<double>(p.negative_scores.size()));
}

/// Scans every candidate threshold t (each observed score), keeps those with
/// TPR(t) = #{pos >= t} / n_pos >= 0.95 and reports FPR at the largest such t.
inline double fpr95_scan(const ScoredPopulations& p) {
  std::vector<double> cand = p.positive_scores;
  cand.insert(cand.end(), p.negative_scores.begin(), p.negative_scores.end());
  double best_t = -std::numeric_limits<double>::infinity();
  for (double t : cand) {
    const auto tp = std::count_if(p.positive_scores.begin(), p.positive_scores.end(), [&](double s) { return s >= t; });
    if (100.0 * static_cast<double>(tp) >= 95.0 * static_cast<double>(p.positive_scores.size())) {
      best_t = std::max(best_t, t);
    }
  }
  const auto fp = std::count_if(p.negative_scores.begin(), p.negative_scores.end(), [&](double s) { return s >= best_t; });
  return static_cast<double>(fp) / static_cast<double>(p.negative_scores.size());
}

/// Average precision: sum over distinct thresholds of (recall step) x precision.
inline double aupr_thresholds(const ScoredPopulations& p) {
  std::vector<double> t = p.positive_scores;
  t.insert(t.end(), p.negative_scores.begin(), p.negative_scores.end());
  std::sort(t.begin(), t.end(), std::greater<>());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  double ap = 0, prev_recall = 0;
  for (double th : t) {
    const double tp = static_cast<double>(
        std::count_if(p.positive_scores.begin(), p.positive_scores.end(), [&](double s) { return s >= th; }));
    const double fp = static_cast<double>(
        std::count_if(p.negative_scores.begin(), p.negative_scores.end(), [&](double s) { return s >= th; }));
    const double recall = tp / static_cast<double>(p.positive_scores.size());
    if (tp > 0) ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
  }
  return ap;
}

/// W1 as the integral of |F_a - F_b| over the real line.
inline double w1_cdf_integral(std::span<const double> a, std::span<const double> b) {
  std::vector<double> pts(a.begin(), a.end());
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  auto cdf = [](std::span<const double> s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= x; })) /
           static_cast<double>(s.size());
  };
  double acc = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) acc += std::abs(cdf(a, pts[i]) - cdf(b, pts[i])) * (pts[i + 1] - pts[i]);
  return acc;
}

/// Optimal transport by exhaustive search: both samples are expanded to
/// lcm(n, m) equally weighted atoms and the cheapest perfect matching is found
/// by dynamic programming over subsets (exact, fine for lcm <= 20).
inline double w1_transport_bruteforce(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size(), m = b.size(), l = std::lcm(n, m);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < l; ++i) {
    x.push_back(a[i / (l / n)]);
    y.push_back(b[i / (l / m)]);
  }
  std::vector<double> dp(std::size_t{1} << l, std::numeric_limits<double>::infinity());
  dp[0] = 0;
  for (std::size_t mask = 0; mask < dp.size(); ++mask) {
    if (!std::isfinite(dp[mask])) continue;
    const auto i = static_cast<std::size_t>(std::popcount(mask));
    if (i == l) continue;
    for (std::size_t j = 0; j < l; ++j) {
      if (mask & (std::size_t{1} << j)) continue;
      auto& slot = dp[mask | (std::size_t{1} << j)];
      slot = std::min(slot, dp[mask] + std::abs(x[i] - y[j]));
    }
  }
  return dp.back() / static_cast<double>(l);
}

/// Scores drawn from a coarse grid so that ties are common.
inline ScoredPopulations random_populations(std::mt19937_64& rng, std::size_t max_size = 100) {
  std::uniform_int_distribution<std::size_t> size(1, max_size);
  std::uniform_int_distribution<int> grid(0, 20);
  std::uniform_int_distribution<int> shift(-6, 6);
  ScoredPopulations p;
  const int s = shift(rng);
  const std::size_t np = size(rng), nn = size(rng);
  for (std::size_t i = 0; i < np; ++i) p.positive_scores.push_back((grid(rng) + s) / 20.0);
  for (std::size_t i = 0; i < nn; ++i) p.negative_scores.push_back(grid(rng) / 20.0);
  return p;
}

}  // namespace mcaae::testing
