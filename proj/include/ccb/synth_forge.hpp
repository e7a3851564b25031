#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccb/trace_store.hpp"
#include "json.hpp"

namespace ccb {

/// Synthetic trace generator with a planted Gaussian truth signal.
///
/// Hidden state of example i at layer l is a(l) * (2 y_i - 1) * u + N(0, I),
/// with a(l) = peak_signal * exp(-(l - planted_layer)^2 / (2 profile_width^2))
/// and a(L-1) additionally scaled by final_collapse_factor. Along u the two
/// classes are unit-variance Gaussians at +-a(l), so the Bayes AUROC of layer l
/// is Phi(sqrt(2) a(l)).
struct SynthSpec {
  int num_layers = 8;
  int hidden_dim = 16;
  int n_examples = 800;  // even; exactly half correct
  int planted_layer = 3;
  double peak_signal = 1.2;
  double profile_width = 1.0;
  double final_collapse_factor = 0.3;
  double dissonance_rate = 0.5;  // fraction of incorrect examples with planted high confidence
  std::uint64_t truth_direction_seed = 7;
  std::uint64_t noise_seed = 42;
  std::optional<std::vector<double>> direction_override;  // unit vector of length hidden_dim
  std::string model_id = "synthetic";
  std::string dataset_id = "synth";
};

void validate(const SynthSpec& spec);

/// Per-layer signal amplitude a(l), collapse applied at the final layer.
double layer_signal(const SynthSpec& spec, int layer);

/// Unit truth direction u (override if present, else drawn from truth_direction_seed).
std::vector<double> truth_direction(const SynthSpec& spec);

/// A unit vector orthogonal to `direction`, drawn from `seed`.
std::vector<double> orthogonal_direction(const std::vector<double>& direction, std::uint64_t seed);

/// Standard normal CDF.
double normal_cdf(double x);

/// Phi(sqrt(2) * a(layer)).
double analytic_layer_auroc(const SynthSpec& spec, int layer);

/// Deterministic under (truth_direction_seed, noise_seed). p_semantic model:
/// correct ~ U(0.55, 0.95); honest incorrect ~ U(0.35, 0.75); a
/// dissonance_rate share of incorrect examples ~ 0.85 + 0.1 U (planted
/// dissonance). p_semantic_raw equals p_semantic_T; header temperature 1.5.
TraceSet generate(const SynthSpec& spec);

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& spec);

}  // namespace ccb
