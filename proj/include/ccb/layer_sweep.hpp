#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccb/probe_lab.hpp"
#include "ccb/trace_store.hpp"
#include "json.hpp"

namespace ccb {

struct LayerScore {
  int layer_index = 0;
  double normalized_depth = 0.0;  // layer_index / (L - 1)
  double cv_auroc = 0.0;

  bool operator==(const LayerScore&) const = default;
};

struct SweepResult {
  std::vector<LayerScore> per_layer;
  int l_opt = 0;
  double final_layer_auroc = 0.0;
  int num_layers = 0;
  int hidden_dim = 0;
  int folds = kDefaultFolds;
  std::uint64_t seed = 42;

  bool operator==(const SweepResult&) const = default;
};

struct EmergencePoint {
  double normalized_depth = 0.0;
  double cv_auroc = 0.0;
};

double normalized_depth(int layer_index, int num_layers);

/// Cross-validated probe AUROC for every stored layer; l_opt is the argmax,
/// ties resolved to the shallowest layer. Layers run in parallel.
SweepResult run_sweep(const TraceSet& train, int folds = kDefaultFolds, std::uint64_t seed = 42,
                      double lambda = kDefaultLambda);

/// Probe fitted on the full training set at `layer`.
ProbeModel train_layer_probe(const TraceSet& train, int layer, double lambda = kDefaultLambda);

/// Probe fitted on the full training set at sweep.l_opt.
ProbeModel train_optimal_probe(const TraceSet& train, const SweepResult& sweep, double lambda = kDefaultLambda);

std::vector<EmergencePoint> emergence_curve(const SweepResult& sweep);

/// CSV with header "normalized_depth,cv_auroc".
std::string emergence_csv(const SweepResult& sweep);

nlohmann::json to_json(const SweepResult& sweep);
SweepResult sweep_from_json(const nlohmann::json& j);

}  // namespace ccb
