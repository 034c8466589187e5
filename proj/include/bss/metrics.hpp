#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bss/types.hpp"

namespace bss {

/// Best channel assignment between true and estimated sources, invariant to
/// the inherent permutation/sign/scale ambiguity.
///
/// matched_truth lists the matched true-channel indices in ascending order
/// (all of them when n_est >= n_true); permutation[i] is the estimated
/// channel assigned to matched_truth[i]; correlations[i] the absolute
/// Pearson r of that pair and signs[i] the sign of the raw r. amari is
/// filled by callers that have a square global matrix to report.
struct MatchReport {
  std::vector<int> matched_truth;
  std::vector<int> permutation;
  std::vector<int> signs;
  std::vector<double> correlations;
  std::optional<double> amari;
};

/// Exhaustive assignment maximizing total |Pearson r| over
/// min(n_true, n_est) pairs. Correlations use population (1/T)
/// normalization. Supported up to 6 channels per side. Throws
/// numeric_error naming the channel when one has zero variance.
MatchReport best_match(const SourceBlock& truth, const SourceBlock& estimate);

/// Normalized Amari error of a square global matrix G (typically B*A):
/// zero iff G is a scaled permutation, at most 1 under this normalization.
double amari_index(const Matrix& G);

/// Counts over `bins` equal-width bins spanning `range` (default: data
/// min..max). The last bin is right-closed; out-of-range values are
/// clamped into the end bins so the counts always sum to the sample count.
std::vector<long> histogram(std::span<const double> series, int bins,
                            std::optional<std::pair<double, double>> range = std::nullopt);

/// The T pairs (s_i(t), s_j(t)) in time order. Channel indices are 0-based.
std::vector<std::pair<double, double>> phase_scatter(const SourceBlock& S, Index i, Index j);

}  // namespace bss
