#include "ccb/synth_forge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ccb/dissonance.hpp"
#include "ccb/errors.hpp"
#include "ccb/rng.hpp"
#include "parallel.hpp"

namespace ccb {

namespace {

// Stream ids for Rng(noise_seed, stream); per-example streams use the example index.
constexpr std::uint64_t kLabelStream = 0xffff'ffff'0000'0001ull;
constexpr std::uint64_t kDissonanceStream = 0xffff'ffff'0000'0002ull;

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> u(dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (auto& v : u) v = rng.normal();
    norm = 0.0;
    for (double v : u) norm += v * v;
    norm = std::sqrt(norm);
  }
  for (auto& v : u) v /= norm;
  return u;
}

}  // namespace

void validate(const SynthSpec& s) {
  if (s.num_layers < 2) throw ValidationError("num_layers must be >= 2");
  if (s.hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
  if (s.n_examples < 2 || s.n_examples % 2 != 0) throw ValidationError("n_examples must be even and >= 2");
  if (s.planted_layer < 0 || s.planted_layer >= s.num_layers) throw ValidationError("planted_layer out of range");
  if (!(s.peak_signal >= 0.0) || !std::isfinite(s.peak_signal)) throw ValidationError("peak_signal must be >= 0");
  if (!(s.profile_width > 0.0) || !std::isfinite(s.profile_width)) throw ValidationError("profile_width must be > 0");
  if (!(s.final_collapse_factor >= 0.0 && s.final_collapse_factor <= 1.0)) {
    throw ValidationError("final_collapse_factor must lie in [0, 1]");
  }
  if (!(s.dissonance_rate >= 0.0 && s.dissonance_rate <= 1.0)) {
    throw ValidationError("dissonance_rate must lie in [0, 1]");
  }
  if (s.direction_override) {
    const auto& u = *s.direction_override;
    if (u.size() != static_cast<std::size_t>(s.hidden_dim)) throw ValidationError("direction_override has wrong size");
    double norm = 0.0;
    for (double v : u) norm += v * v;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-6) throw ValidationError("direction_override must be a unit vector");
  }
}

double layer_signal(const SynthSpec& spec, int layer) {
  if (layer < 0 || layer >= spec.num_layers) throw ValidationError("layer out of range");
  const double offset = static_cast<double>(layer - spec.planted_layer);
  double a = spec.peak_signal * std::exp(-offset * offset / (2.0 * spec.profile_width * spec.profile_width));
  if (layer == spec.num_layers - 1) a *= spec.final_collapse_factor;
  return a;
}

std::vector<double> truth_direction(const SynthSpec& spec) {
  if (spec.direction_override) return *spec.direction_override;
  Rng rng(spec.truth_direction_seed);
  return random_unit(rng, static_cast<std::size_t>(spec.hidden_dim));
}

std::vector<double> orthogonal_direction(const std::vector<double>& direction, std::uint64_t seed) {
  if (direction.size() < 2) throw ValidationError("orthogonal direction needs dimension >= 2");
  Rng rng(seed);
  while (true) {
    auto v = random_unit(rng, direction.size());
    double proj = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) proj += v[i] * direction[i];
    double norm = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] -= proj * direction[i];
      norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    return v;
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double analytic_layer_auroc(const SynthSpec& spec, int layer) {
  return normal_cdf(std::numbers::sqrt2 * layer_signal(spec, layer));
}

TraceSet generate(const SynthSpec& spec) {
  validate(spec);
  const auto n = static_cast<std::size_t>(spec.n_examples);
  const auto dim = static_cast<std::size_t>(spec.hidden_dim);
  const auto layers = static_cast<std::size_t>(spec.num_layers);
  const auto u = truth_direction(spec);
  std::vector<double> signal(layers);
  for (std::size_t l = 0; l < layers; ++l) signal[l] = layer_signal(spec, static_cast<int>(l));

  std::vector<std::uint8_t> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n / 2), 1);
  Rng label_rng(spec.noise_seed, kLabelStream);
  label_rng.shuffle(std::span<std::uint8_t>(labels));

  std::vector<std::uint8_t> dissonant(n, 0);
  std::vector<std::size_t> incorrect;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == 0) incorrect.push_back(i);
  }
  Rng dissonance_rng(spec.noise_seed, kDissonanceStream);
  dissonance_rng.shuffle(std::span<std::size_t>(incorrect));
  const auto planted = static_cast<std::size_t>(std::llround(spec.dissonance_rate * static_cast<double>(incorrect.size())));
  for (std::size_t k = 0; k < planted; ++k) dissonant[incorrect[k]] = 1;

  TraceSet set;
  set.header.model_id = spec.model_id;
  set.header.dataset_id = spec.dataset_id;
  set.header.num_layers = spec.num_layers;
  set.header.hidden_dim = spec.hidden_dim;
  set.header.extraction_mode = ExtractionMode::mean;
  set.header.stored_temperature = kDefaultTemperature;
  set.header.record_count = n;
  set.records.resize(n);

  detail::parallel_for(n, [&](std::size_t i) {
    Rng rng(spec.noise_seed, i);
    auto& rec = set.records[i];
    rec.example_id = i;
    rec.label = labels[i];
    double p;
    if (rec.label == 1) {
      p = 0.55 + 0.40 * rng.uniform();
    } else if (dissonant[i]) {
      p = 0.85 + 0.10 * rng.uniform();
    } else {
      p = 0.35 + 0.40 * rng.uniform();
    }
    rec.p_semantic_t = static_cast<float>(std::clamp(p, 0.0, 1.0));
    rec.p_semantic_raw = rec.p_semantic_t;
    const double sign = rec.label == 1 ? 1.0 : -1.0;
    rec.hidden.resize(layers * dim);
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t j = 0; j < dim; ++j) {
        rec.hidden[l * dim + j] = static_cast<float>(signal[l] * sign * u[j] + rng.normal());
      }
    }
  });
  return set;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.num_layers = j.value("num_layers", s.num_layers);
    s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
    s.n_examples = j.value("n_examples", s.n_examples);
    s.planted_layer = j.value("planted_layer", s.planted_layer);
    s.peak_signal = j.value("peak_signal", s.peak_signal);
    s.profile_width = j.value("profile_width", s.profile_width);
    s.final_collapse_factor = j.value("final_collapse_factor", s.final_collapse_factor);
    s.dissonance_rate = j.value("dissonance_rate", s.dissonance_rate);
    s.truth_direction_seed = j.value("truth_direction_seed", s.truth_direction_seed);
    s.noise_seed = j.value("noise_seed", s.noise_seed);
    s.model_id = j.value("model_id", s.model_id);
    s.dataset_id = j.value("dataset_id", s.dataset_id);
    if (j.contains("direction_override") && !j.at("direction_override").is_null()) {
      s.direction_override = j.at("direction_override").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed synth spec: ") + e.what());
  }
  validate(s);
  return s;
}

nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::ordered_json j;
  j["num_layers"] = s.num_layers;
  j["hidden_dim"] = s.hidden_dim;
  j["n_examples"] = s.n_examples;
  j["planted_layer"] = s.planted_layer;
  j["peak_signal"] = s.peak_signal;
  j["profile_width"] = s.profile_width;
  j["final_collapse_factor"] = s.final_collapse_factor;
  j["dissonance_rate"] = s.dissonance_rate;
  j["truth_direction_seed"] = s.truth_direction_seed;
  j["noise_seed"] = s.noise_seed;
  j["direction_override"] = s.direction_override ? nlohmann::json(*s.direction_override) : nlohmann::json(nullptr);
  j["model_id"] = s.model_id;
  j["dataset_id"] = s.dataset_id;
  return j;
}

}  // namespace ccb
