#include "ccb/dissonance.hpp"

#include <algorithm>
#include <cmath>

#include "ccb/errors.hpp"

namespace ccb {

double semantic_confidence(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw ValidationError("logits must be non-empty");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive");
  double max_logit = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw ValidationError("logits must be finite");
    max_logit = std::max(max_logit, v);
  }
  // max_i softmax_i = exp(0) / sum_j exp((l_j - max) / T)
  double denom = 0.0;
  for (double v : logits) denom += std::exp((v - max_logit) / temperature);
  return 1.0 / denom;
}

double dissonance_delta(double p_semantic, double p_latent) {
  const auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(p_semantic) || !in_unit(p_latent)) {
    throw ValidationError("dissonance_delta inputs must lie in [0, 1]");
  }
  return p_semantic - p_latent;
}

DissonanceSample make_sample(double p_semantic, double p_latent, std::uint8_t correct) {
  if (correct > 1) throw ValidationError("correctness label must be 0 or 1");
  return {p_semantic, p_latent, dissonance_delta(p_semantic, p_latent), static_cast<std::uint8_t>(1 - correct)};
}

std::vector<double> deltas_of(std::span<const DissonanceSample> samples) {
  std::vector<double> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(), [](const auto& s) { return s.delta; });
  return out;
}

std::vector<std::uint8_t> hallucinations_of(std::span<const DissonanceSample> samples) {
  std::vector<std::uint8_t> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(), [](const auto& s) { return s.hallucination; });
  return out;
}

CalibrationOutcome calibrate(std::span<const DissonanceSample> samples, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive");
  const auto halluc = hallucinations_of(samples);
  const auto n_halluc = static_cast<std::size_t>(std::count(halluc.begin(), halluc.end(), 1));
  if (n_halluc == 0 || n_halluc == samples.size()) {
    throw DegenerateInputError("calibration needs both hallucinated and correct samples");
  }
  std::vector<double> latent(samples.size());
  std::vector<std::uint8_t> correct(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    latent[i] = samples[i].p_latent;
    correct[i] = static_cast<std::uint8_t>(1 - samples[i].hallucination);
  }
  CalibrationOutcome out;
  out.temperature = temperature;
  out.tau_probe = best_f1_threshold(latent, correct);
  out.tau_delta = best_f1_threshold(deltas_of(samples), halluc);
  return out;
}

double delta_auroc(std::span<const DissonanceSample> samples) { return auroc(deltas_of(samples), hallucinations_of(samples)); }

}  // namespace ccb
