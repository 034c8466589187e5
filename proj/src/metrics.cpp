#include "bss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bss {
namespace {

constexpr int kMaxChannels = 6;

// Population Pearson correlation matrix between the rows of two blocks.
Matrix correlation_table(const Matrix& a, const Matrix& b) {
  const Index T = a.cols();
  const double invT = 1.0 / static_cast<double>(T);
  Vector mean_a = a.rowwise().mean(), mean_b = b.rowwise().mean();
  Matrix ca = a.colwise() - mean_a, cb = b.colwise() - mean_b;
  Vector sd_a = (ca.array().square().rowwise().sum() * invT).sqrt();
  Vector sd_b = (cb.array().square().rowwise().sum() * invT).sqrt();
  for (Index i = 0; i < sd_a.size(); ++i)
    if (sd_a(i) == 0.0)
      throw numeric_error("best_match: true channel " + std::to_string(i) +
                          " has zero variance");
  for (Index j = 0; j < sd_b.size(); ++j)
    if (sd_b(j) == 0.0)
      throw numeric_error("best_match: estimated channel " + std::to_string(j) +
                          " has zero variance");
  Matrix r = (ca * cb.transpose()) * invT;
  for (Index i = 0; i < r.rows(); ++i)
    for (Index j = 0; j < r.cols(); ++j) r(i, j) /= sd_a(i) * sd_b(j);
  return r;
}

// Recursively assigns each index of the smaller side to a distinct index of
// the larger side, maximizing the summed |r|.
void assign(const Matrix& absr, bool truth_small, std::size_t pos, std::vector<int>& current,
            std::vector<bool>& used, double score, double& best_score,
            std::vector<int>& best) {
  const std::size_t small_n = truth_small ? absr.rows() : absr.cols();
  const std::size_t large_n = truth_small ? absr.cols() : absr.rows();
  if (pos == small_n) {
    if (score > best_score) {
      best_score = score;
      best = current;
    }
    return;
  }
  for (std::size_t cand = 0; cand < large_n; ++cand) {
    if (used[cand]) continue;
    used[cand] = true;
    current[pos] = static_cast<int>(cand);
    const double r = truth_small ? absr(pos, cand) : absr(cand, pos);
    assign(absr, truth_small, pos + 1, current, used, score + r, best_score, best);
    used[cand] = false;
  }
}

}  // namespace

MatchReport best_match(const SourceBlock& truth, const SourceBlock& estimate) {
  if (truth.samples() != estimate.samples())
    throw shape_error("best_match: sample counts differ");
  if (truth.sources() > kMaxChannels || estimate.sources() > kMaxChannels)
    throw shape_error("best_match: exhaustive assignment supports up to 6 channels");

  const Matrix r = correlation_table(truth.data, estimate.data);
  const Matrix absr = r.cwiseAbs();
  const bool truth_small = truth.sources() <= estimate.sources();
  const std::size_t k = static_cast<std::size_t>(std::min(truth.sources(), estimate.sources()));

  std::vector<int> current(k), best_assign(k);
  std::vector<bool> used(static_cast<std::size_t>(std::max(truth.sources(), estimate.sources())),
                         false);
  double best_score = -1.0;
  assign(absr, truth_small, 0, current, used, 0.0, best_score, best_assign);

  // Normalize to pairs (true index, est index) ordered by true index.
  std::vector<std::pair<int, int>> pairs(k);
  for (std::size_t p = 0; p < k; ++p) {
    pairs[p] = truth_small ? std::make_pair(static_cast<int>(p), best_assign[p])
                           : std::make_pair(best_assign[p], static_cast<int>(p));
  }
  std::sort(pairs.begin(), pairs.end());

  MatchReport report;
  for (const auto& [ti, ej] : pairs) {
    report.matched_truth.push_back(ti);
    report.permutation.push_back(ej);
    report.correlations.push_back(absr(ti, ej));
    report.signs.push_back(r(ti, ej) >= 0.0 ? 1 : -1);
  }
  return report;
}

double amari_index(const Matrix& G) {
  if (G.rows() != G.cols()) throw shape_error("amari_index: G must be square");
  const Index n = G.rows();
  const Matrix a = G.cwiseAbs();
  for (Index i = 0; i < n; ++i) {
    if (a.row(i).maxCoeff() == 0.0)
      throw numeric_error("amari_index: all-zero row " + std::to_string(i));
    if (a.col(i).maxCoeff() == 0.0)
      throw numeric_error("amari_index: all-zero column " + std::to_string(i));
  }
  if (n == 1) return 0.0;
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) acc += a.row(i).sum() / a.row(i).maxCoeff() - 1.0;
  for (Index j = 0; j < n; ++j) acc += a.col(j).sum() / a.col(j).maxCoeff() - 1.0;
  return acc / (2.0 * static_cast<double>(n) * static_cast<double>(n - 1));
}

std::vector<long> histogram(std::span<const double> series, int bins,
                            std::optional<std::pair<double, double>> range) {
  if (bins < 1) throw support_error("histogram: bins must be >= 1");
  if (series.empty()) throw support_error("histogram: empty series");
  double lo, hi;
  if (range) {
    std::tie(lo, hi) = *range;
    if (!(lo <= hi)) throw support_error("histogram: bad range");
  } else {
    lo = *std::min_element(series.begin(), series.end());
    hi = *std::max_element(series.begin(), series.end());
  }
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (double v : series) {
    long idx = 0;
    if (width > 0.0) {
      idx = static_cast<long>(std::floor((v - lo) / width));
      idx = std::clamp(idx, 0l, static_cast<long>(bins) - 1);
    }
    ++counts[static_cast<std::size_t>(idx)];
  }
  return counts;
}

std::vector<std::pair<double, double>> phase_scatter(const SourceBlock& S, Index i, Index j) {
  if (i < 0 || j < 0 || i >= S.sources() || j >= S.sources())
    throw shape_error("phase_scatter: channel index out of range");
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(S.samples()));
  for (Index t = 0; t < S.samples(); ++t) pts.emplace_back(S.data(i, t), S.data(j, t));
  return pts;
}

}  // namespace bss
