#pragma once

#include <span>
#include <vector>

#include "ccb/stat_engine.hpp"

namespace ccb {

inline constexpr double kDefaultTemperature = 1.5;

struct DissonanceSample {
  double p_semantic = 0.0;
  double p_latent = 0.0;
  double delta = 0.0;
  std::uint8_t hallucination = 0;  // 1 = incorrect answer
};

struct CalibrationOutcome {
  ThresholdResult tau_probe;  // P_latent vs. correctness
  ThresholdResult tau_delta;  // delta vs. hallucination
  double temperature = kDefaultTemperature;
};

/// Max softmax probability of logits / temperature.
double semantic_confidence(std::span<const double> logits, double temperature = kDefaultTemperature);

/// Cognitive dissonance delta: p_semantic - p_latent. Inputs must lie in [0, 1].
double dissonance_delta(double p_semantic, double p_latent);

/// Builds a sample from a correctness label (1 = correct).
DissonanceSample make_sample(double p_semantic, double p_latent, std::uint8_t correct);

CalibrationOutcome calibrate(std::span<const DissonanceSample> samples, double temperature = kDefaultTemperature);

/// AUROC of delta as a hallucination score.
double delta_auroc(std::span<const DissonanceSample> samples);

std::vector<double> deltas_of(std::span<const DissonanceSample> samples);
std::vector<std::uint8_t> hallucinations_of(std::span<const DissonanceSample> samples);

}  // namespace ccb
