#include "mcaae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "mcaae/error.hpp"

namespace mcaae {

namespace {

void require_nonempty(const ScoredPopulations& pops, const char* metric) {
  if (pops.positive_scores.empty() || pops.negative_scores.empty()) {
    throw ValidationError(std::string(metric) + " needs nonempty positive and negative populations");
  }
  for (const auto* v : {&pops.positive_scores, &pops.negative_scores}) {
    for (double s : *v) {
      if (!std::isfinite(s)) throw ValidationError(std::string(metric) + ": scores must be finite");
    }
  }
}

}  // namespace

double auroc(const ScoredPopulations& pops) {
  require_nonempty(pops, "auroc");
  std::vector<double> neg = pops.negative_scores;
  std::sort(neg.begin(), neg.end());
  // Count in half-units so the numerator stays an exact integer.
  std::size_t half_units = 0;
  for (double p : pops.positive_scores) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    half_units += 2 * static_cast<std::size_t>(lo - neg.begin()) + static_cast<std::size_t>(hi - lo);
  }
  return static_cast<double>(half_units) /
         (2.0 * static_cast<double>(pops.positive_scores.size()) * static_cast<double>(neg.size()));
}

double aupr(const ScoredPopulations& pops) {
  if (pops.positive_scores.empty()) throw ValidationError("aupr needs at least one positive");
  std::vector<std::pair<double, bool>> items;
  for (double s : pops.positive_scores) items.emplace_back(s, true);
  for (double s : pops.negative_scores) items.emplace_back(s, false);
  for (const auto& it : items) {
    if (!std::isfinite(it.first)) throw ValidationError("aupr: scores must be finite");
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const auto n_pos = static_cast<double>(pops.positive_scores.size());
  std::size_t tp = 0, fp = 0;
  double ap = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i, block_pos = 0;
    while (j < items.size() && items[j].first == items[i].first) {
      block_pos += items[j].second ? 1 : 0;
      ++j;
    }
    tp += block_pos;
    fp += (j - i) - block_pos;
    if (block_pos > 0) {
      ap += (static_cast<double>(block_pos) / n_pos) * (static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    i = j;
  }
  return ap;
}

double fpr_at_95_tpr(const ScoredPopulations& pops) {
  require_nonempty(pops, "fpr95");
  std::vector<double> pos = pops.positive_scores;
  std::sort(pos.begin(), pos.end(), std::greater<>());
  // Smallest k with 100 k >= 95 n.
  const std::size_t n = pos.size();
  const std::size_t k = (95 * n + 99) / 100;
  const double threshold = pos[k - 1];
  const auto false_pos = std::count_if(pops.negative_scores.begin(), pops.negative_scores.end(),
                                       [&](double s) { return s >= threshold; });
  return static_cast<double>(false_pos) / static_cast<double>(pops.negative_scores.size());
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("wasserstein1 needs nonempty samples");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  // Walk the merged grid of quantile breakpoints i/n and j/m. Using integer
  // cross-multiplication keeps breakpoint comparisons exact.
  const std::size_t n = x.size(), m = y.size();
  const double total = static_cast<double>(n) * static_cast<double>(m);
  std::size_t i = 0, j = 0;
  std::size_t prev = 0;  // current position on the grid in units of 1/(n m)
  double acc = 0;
  while (i < n && j < m) {
    const std::size_t next_a = (i + 1) * m;
    const std::size_t next_b = (j + 1) * n;
    const std::size_t next = std::min(next_a, next_b);
    acc += static_cast<double>(next - prev) * std::abs(x[i] - y[j]);
    prev = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return acc / total;
}

SeparationSummary td_od(const EntropyHistogramSet& hists, const std::string& reference_out) {
  const auto ref = hists.out_dists.find(reference_out);
  if (ref == hists.out_dists.end()) throw ValidationError("unknown reference OOD set '" + reference_out + "'");
  SeparationSummary s;
  for (const auto& [name, values] : hists.out_dists) {
    s.td += wasserstein1(hists.in_dist, values);
    if (name != reference_out) s.od += wasserstein1(ref->second, values);
  }
  return s;
}

std::vector<HistogramBin> entropy_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b] = {static_cast<double>(b) / static_cast<double>(bins), static_cast<double>(b + 1) / static_cast<double>(bins),
              0};
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("histogram values must lie in [0, 1]");
    const auto b = std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)));
    ++out[b].count;
  }
  return out;
}

MetricRow metric_row(std::string d_in, std::string d_out, const ScoredPopulations& pops) {
  MetricRow r;
  r.d_in = std::move(d_in);
  r.d_out = std::move(d_out);
  r.auroc = auroc(pops);
  r.aupr = aupr(pops);
  r.fpr95 = fpr_at_95_tpr(pops);
  r.n_in = pops.negative_scores.size();
  r.n_out = pops.positive_scores.size();
  return r;
}

}  // namespace mcaae
