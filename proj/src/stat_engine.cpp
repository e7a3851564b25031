#include "ccb/stat_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccb/errors.hpp"
#include "ccb/rng.hpp"
#include "parallel.hpp"

namespace ccb {

namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts check_scored_labels(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  ClassCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw ValidationError("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ValidationError("scores must be finite");
    labels[i] ? ++c.positives : ++c.negatives;
  }
  return c;
}

std::vector<std::size_t> ascending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

double auroc_unchecked(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t positives,
                       std::size_t negatives) {
  const auto order = ascending_order(scores);
  // Twice the Mann-Whitney U, kept integral so ties are exact.
  std::uint64_t twice_u = 0;
  std::uint64_t negatives_below = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    std::uint64_t group_pos = 0, group_neg = 0;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      labels[order[end]] ? ++group_pos : ++group_neg;
      ++end;
    }
    twice_u += 2 * group_pos * negatives_below + group_pos * group_neg;
    negatives_below += group_neg;
    start = end;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
}

// Resamples n indices with replacement until both classes appear.
void draw_resample(Rng& rng, std::span<const std::uint8_t> labels, std::vector<std::size_t>& idx,
                   ClassCounts& counts) {
  const auto n = labels.size();
  do {
    counts = {};
    for (auto& i : idx) {
      i = static_cast<std::size_t>(rng.below(n));
      labels[i] ? ++counts.positives : ++counts.negatives;
    }
  } while (counts.positives == 0 || counts.negatives == 0);
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto c = check_scored_labels(scores, labels);
  if (c.positives == 0 || c.negatives == 0) throw DegenerateInputError("AUROC needs both classes present");
  return auroc_unchecked(scores, labels, c.positives, c.negatives);
}

double f1_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double tau) {
  check_scored_labels(scores, labels);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > tau;
    if (predicted && labels[i]) ++tp;
    if (predicted && !labels[i]) ++fp;
    if (!predicted && labels[i]) ++fn;
  }
  return f1_from_counts(tp, fp, fn);
}

std::vector<double> threshold_candidates(std::span<const double> scores) {
  if (scores.empty()) return {};
  std::vector<double> values(scores.begin(), scores.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> out;
  out.reserve(values.size() + 1);
  out.push_back(std::nextafter(values.front(), -INFINITY));
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    double mid = values[k] + (values[k + 1] - values[k]) / 2.0;
    // Adjacent doubles: the midpoint may round onto the upper value, which
    // would move that value to the negative side.
    if (mid >= values[k + 1]) mid = values[k];
    out.push_back(mid);
  }
  out.push_back(std::nextafter(values.back(), INFINITY));
  return out;
}

ThresholdResult best_f1_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto c = check_scored_labels(scores, labels);
  if (c.positives == 0) throw DegenerateInputError("F1 undefined without positive labels");

  const auto candidates = threshold_candidates(scores);
  const auto order = ascending_order(scores);

  // Candidate 0 predicts everything positive.
  std::size_t tp = c.positives, fp = c.negatives;
  ThresholdResult best{candidates.front(), f1_from_counts(tp, fp, 0)};
  std::size_t candidate = 1;
  for (std::size_t start = 0; start < order.size(); ++candidate) {
    std::size_t end = start;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      labels[order[end]] ? --tp : --fp;
      ++end;
    }
    const double f1 = f1_from_counts(tp, fp, c.positives - tp);
    if (f1 > best.f1) best = {candidates[candidate], f1};
    start = end;
  }
  return best;
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("percentile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> bootstrap_replicates(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                         int iterations, std::uint64_t seed) {
  const auto c = check_scored_labels(scores, labels);
  if (c.positives == 0 || c.negatives == 0) throw DegenerateInputError("bootstrap needs both classes present");
  if (iterations < 1) throw ValidationError("bootstrap iterations must be positive");
  std::vector<double> out(static_cast<std::size_t>(iterations));
  detail::parallel_for(out.size(), [&](std::size_t it) {
    Rng rng(seed, it);
    std::vector<std::size_t> idx(scores.size());
    std::vector<double> s(scores.size());
    std::vector<std::uint8_t> l(scores.size());
    ClassCounts counts;
    draw_resample(rng, labels, idx, counts);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      s[k] = scores[idx[k]];
      l[k] = labels[idx[k]];
    }
    out[it] = auroc_unchecked(s, l, counts.positives, counts.negatives);
  });
  return out;
}

BootstrapCI bootstrap_ci(std::span<const double> scores, std::span<const std::uint8_t> labels, int iterations,
                         std::uint64_t seed, int min_class) {
  const auto c = check_scored_labels(scores, labels);
  BootstrapCI ci;
  ci.iterations = iterations;
  ci.seed = seed;
  const auto smallest = std::min(c.positives, c.negatives);
  if (smallest == 0 || smallest < static_cast<std::size_t>(std::max(min_class, 0))) return ci;

  auto values = bootstrap_replicates(scores, labels, iterations, seed);
  std::sort(values.begin(), values.end());
  ci.lower = percentile(values, 0.025);
  ci.upper = percentile(values, 0.975);
  ci.available = true;
  return ci;
}

double paired_bootstrap_pvalue(std::span<const double> scores_a, std::span<const double> scores_b,
                               std::span<const std::uint8_t> labels, int iterations, std::uint64_t seed) {
  if (scores_a.size() != scores_b.size()) throw ValidationError("paired score lists differ in length");
  const auto c = check_scored_labels(scores_a, labels);
  check_scored_labels(scores_b, labels);
  if (c.positives == 0 || c.negatives == 0) throw DegenerateInputError("paired bootstrap needs both classes");
  if (iterations < 1) throw ValidationError("bootstrap iterations must be positive");

  std::vector<std::uint8_t> not_better(static_cast<std::size_t>(iterations), 0);
  detail::parallel_for(not_better.size(), [&](std::size_t it) {
    Rng rng(seed, it);
    const auto n = labels.size();
    std::vector<std::size_t> idx(n);
    std::vector<double> a(n), b(n);
    std::vector<std::uint8_t> l(n);
    ClassCounts counts;
    draw_resample(rng, labels, idx, counts);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = scores_a[idx[k]];
      b[k] = scores_b[idx[k]];
      l[k] = labels[idx[k]];
    }
    const double diff = auroc_unchecked(a, l, counts.positives, counts.negatives) -
                        auroc_unchecked(b, l, counts.positives, counts.negatives);
    not_better[it] = diff <= 0.0;
  });
  const auto count = std::accumulate(not_better.begin(), not_better.end(), std::size_t{0});
  return static_cast<double>(1 + count) / static_cast<double>(iterations + 1);
}

double permutation_control(const Matrix& x, std::span<const std::uint8_t> y, std::uint64_t seed, int folds,
                           double lambda) {
  std::vector<std::uint8_t> permuted(y.begin(), y.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::uint8_t>(permuted));
  return cross_val_auroc(x, permuted, folds, seed, lambda);
}

}  // namespace ccb
