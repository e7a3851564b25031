#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccb/trace_store.hpp"
#include "json.hpp"

namespace ccb {

/// Row-major design matrix, one example per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kMinScale = 1e-8;
inline constexpr double kDefaultLambda = 1.0;
inline constexpr int kDefaultFolds = 5;

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population std, floored at kMinScale

  std::size_t dim() const { return mean.size(); }
  Matrix transform(const Matrix& x) const;

  bool operator==(const Standardizer&) const = default;
};

struct ProbeModel {
  int layer_index = 0;
  Standardizer standardizer;
  std::vector<double> weights;
  double bias = 0.0;
  double lambda = kDefaultLambda;
  std::string train_meta;

  std::size_t dim() const { return weights.size(); }

  bool operator==(const ProbeModel&) const = default;
};

enum class ProbeSolver {
  automatic,  // newton up to kNewtonMaxDim features, lbfgs above
  newton,
  lbfgs,
};

inline constexpr std::size_t kNewtonMaxDim = 256;

struct ProbeFitOptions {
  double lambda = kDefaultLambda;
  ProbeSolver solver = ProbeSolver::automatic;
  double gradient_tolerance = 1e-6;
  int max_iterations = 1000;
};

struct FitDiagnostics {
  int iterations = 0;
  double gradient_inf_norm = 0.0;
  std::vector<double> loss_history;  // objective after each accepted iterate, starting at zero init
  bool converged = false;
};

struct TrainedProbe {
  ProbeModel model;
  FitDiagnostics diagnostics;
};

Standardizer fit_standardizer(const Matrix& x);

/// L2-regularized logistic regression on standardized features:
///   mean BCE + (lambda / 2) * ||w||^2, bias unpenalized, zero initialization.
/// Deterministic; converges to gradient inf-norm <= tolerance.
TrainedProbe fit_probe(const Matrix& x, std::span<const std::uint8_t> y, int layer_index,
                       const ProbeFitOptions& options = {});

inline ProbeModel train_probe(const Matrix& x, std::span<const std::uint8_t> y, int layer_index,
                              double lambda = kDefaultLambda) {
  ProbeFitOptions options;
  options.lambda = lambda;
  return fit_probe(x, y, layer_index, options).model;
}

inline double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// weights . standardize(h) + bias, without allocating.
template <typename T>
double probe_logit(const ProbeModel& probe, std::span<const T> h) {
  const auto& mean = probe.standardizer.mean;
  const auto& scale = probe.standardizer.scale;
  double z = probe.bias;
  for (std::size_t i = 0; i < h.size(); ++i) {
    z += probe.weights[i] * ((static_cast<double>(h[i]) - mean[i]) / scale[i]);
  }
  return z;
}

/// Internal certainty P_latent = sigmoid(probe_logit). Throws on dimension mismatch.
double predict_latent(const ProbeModel& probe, std::span<const double> h);
double predict_latent(const ProbeModel& probe, std::span<const float> h);

/// P_latent for every row of `x`.
std::vector<double> predict_latent_rows(const ProbeModel& probe, const Matrix& x);

/// Stratified k-fold: fit standardizer and probe on k-1 folds, score the held
/// out fold, AUROC over the pooled held-out scores.
double cross_val_auroc(const Matrix& x, std::span<const std::uint8_t> y, int folds, std::uint64_t seed,
                       double lambda = kDefaultLambda);

/// Fold assignment used by cross_val_auroc (exposed for tests).
std::vector<int> stratified_folds(std::span<const std::uint8_t> y, int folds, std::uint64_t seed);

/// Hidden vectors of one layer as an n x D matrix.
Matrix layer_matrix(const TraceSet& set, int layer);
std::vector<std::uint8_t> labels_of(const TraceSet& set);

nlohmann::json to_json(const ProbeModel& probe);
ProbeModel probe_from_json(const nlohmann::json& j);

}  // namespace ccb
