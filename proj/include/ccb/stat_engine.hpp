#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccb/probe_lab.hpp"

namespace ccb {

inline constexpr int kDefaultBootstrapIterations = 1000;
inline constexpr int kDefaultMinClass = 10;

struct BootstrapCI {
  double lower = 0.0;
  double upper = 0.0;
  int iterations = kDefaultBootstrapIterations;
  std::uint64_t seed = 0;
  bool available = false;  // false renders as "N/A"
};

struct ThresholdResult {
  double tau = 0.0;
  double f1 = 0.0;
};

/// Mann-Whitney AUROC: fraction of (positive, negative) pairs where the
/// positive scores higher, ties counted as one half.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// F1 of the rule "score > tau" against positive labels.
double f1_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double tau);

/// Sweeps midpoints between consecutive distinct scores plus one candidate
/// below the minimum and one above the maximum; returns the F1-maximizing
/// threshold, ties resolved to the smallest tau.
ThresholdResult best_f1_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Candidate thresholds considered by best_f1_threshold, ascending.
std::vector<double> threshold_candidates(std::span<const double> scores);

/// Percentile bootstrap CI of the AUROC. Unavailable (N/A) when either class
/// has fewer than `min_class` members. Resamples missing a class are redrawn.
BootstrapCI bootstrap_ci(std::span<const double> scores, std::span<const std::uint8_t> labels,
                         int iterations = kDefaultBootstrapIterations, std::uint64_t seed = 42,
                         int min_class = kDefaultMinClass);

/// Bootstrap AUROC replicates (same resampling as bootstrap_ci).
std::vector<double> bootstrap_replicates(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                         int iterations, std::uint64_t seed);

/// One-sided paired bootstrap test that `scores_a` has higher AUROC than
/// `scores_b`: p = (1 + #{diff <= 0}) / (iterations + 1).
double paired_bootstrap_pvalue(std::span<const double> scores_a, std::span<const double> scores_b,
                               std::span<const std::uint8_t> labels,
                               int iterations = kDefaultBootstrapIterations, std::uint64_t seed = 42);

/// Cross-validated probe AUROC after uniformly permuting the labels.
double permutation_control(const Matrix& x, std::span<const std::uint8_t> y, std::uint64_t seed,
                           int folds = kDefaultFolds, double lambda = kDefaultLambda);

/// Linear-interpolated percentile, q in [0, 1]. `sorted` must be ascending.
double percentile(std::span<const double> sorted, double q);

}  // namespace ccb
