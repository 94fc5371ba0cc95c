#pragma once

// Threshold-free OOD metrics over score populations (positives = samples that
// should be flagged, higher score = more positive) and Wasserstein summaries
// of entropy distributions.

#include <map>
#include <span>
#include <string>
#include <vector>

namespace mcaae {

struct ScoredPopulations {
  std::vector<double> positive_scores;
  std::vector<double> negative_scores;
};

/// Mann-Whitney form: (#{pos > neg} + 0.5 #{pos == neg}) / (n_pos n_neg).
double auroc(const ScoredPopulations& pops);

/// Average precision with tied scores processed as one block.
double aupr(const ScoredPopulations& pops);

/// False-positive rate at the largest threshold t (taken from the positive
/// scores) with #{pos >= t} >= 0.95 n_pos; returns #{neg >= t} / n_neg.
double fpr_at_95_tpr(const ScoredPopulations& pops);

/// Empirical 1-Wasserstein distance on the line (integral of the absolute
/// quantile-function difference).
double wasserstein1(std::span<const double> a, std::span<const double> b);

struct EntropyHistogramSet {
  std::vector<double> in_dist;
  std::map<std::string, std::vector<double>> out_dists;
};

struct SeparationSummary {
  double td = 0;  // sum over OOD sets of W1(in, out)
  double od = 0;  // sum over OOD sets other than the reference of W1(reference, out)
};

SeparationSummary td_od(const EntropyHistogramSet& hists, const std::string& reference_out);

struct HistogramBin {
  double left, right;
  std::size_t count;
};

/// Equal-width bins over [0, 1]; the last bin is closed on the right.
std::vector<HistogramBin> entropy_histogram(std::span<const double> values, std::size_t bins = 20);

struct MetricRow {
  std::string d_in;
  std::string d_out;
  double auroc = 0;
  double aupr = 0;
  double fpr95 = 0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
};

MetricRow metric_row(std::string d_in, std::string d_out, const ScoredPopulations& pops);

}  // namespace mcaae
