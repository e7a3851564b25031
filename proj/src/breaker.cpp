#include "ccb/breaker.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>

#include "ccb/errors.hpp"
#include "ccb/rng.hpp"
#include "ccb/stat_engine.hpp"

namespace ccb {

namespace {

void check_dim(const BreakerConfig& breaker, std::size_t dim) {
  if (dim != breaker.probe.dim()) {
    throw ValidationError("hidden vector has dimension " + std::to_string(dim) + ", breaker probe expects " +
                          std::to_string(breaker.probe.dim()));
  }
}

Decision decide_unchecked(const BreakerConfig& breaker, std::span<const double> hidden, double p_semantic) {
  Decision d;
  d.outward_conf = p_semantic;
  d.internal_cert = stable_sigmoid(probe_logit(breaker.probe, hidden));
  d.delta = dissonance_delta(d.outward_conf, d.internal_cert);
  d.tripped = d.delta > breaker.tau_delta;
  return d;
}

}  // namespace

std::string_view to_string(Status status) { return status == Status::warning ? kStatusWarning : kStatusPass; }

BreakerConfig build_breaker(ProbeModel probe, double tau_delta, double temperature, std::string source) {
  if (!std::isfinite(tau_delta)) throw ValidationError("tau_delta must be finite");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive");
  if (probe.dim() == 0 || probe.standardizer.mean.size() != probe.dim() ||
      probe.standardizer.scale.size() != probe.dim()) {
    throw ValidationError("probe dimensions are inconsistent");
  }
  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(probe.weights) || !finite(probe.standardizer.mean) || !finite(probe.standardizer.scale) ||
      !std::isfinite(probe.bias)) {
    throw ValidationError("probe parameters must be finite");
  }
  return {std::move(probe), tau_delta, temperature, std::move(source)};
}

Decision decide(const BreakerConfig& breaker, std::span<const double> hidden, double p_semantic) {
  check_dim(breaker, hidden.size());
  return decide_unchecked(breaker, hidden, p_semantic);
}

Decision decide_logits(const BreakerConfig& breaker, std::span<const double> hidden, std::span<const double> logits) {
  check_dim(breaker, hidden.size());
  return decide_unchecked(breaker, hidden, semantic_confidence(logits, breaker.temperature));
}

Verdict evaluate(const BreakerConfig& breaker, const BreakerEvent& event) {
  if (!std::all_of(event.hidden_at_lopt.begin(), event.hidden_at_lopt.end(), [](double v) { return std::isfinite(v); })) {
    throw ValidationError("hidden vector must be finite");
  }
  const Decision d = std::visit(
      [&](const auto& semantic) {
        if constexpr (std::is_same_v<std::decay_t<decltype(semantic)>, double>) {
          return decide(breaker, event.hidden_at_lopt, semantic);
        } else {
          return decide_logits(breaker, event.hidden_at_lopt, semantic);
        }
      },
      event.semantic);
  return {event.prompt_id, d.outward_conf, d.internal_cert, d.delta, d.tripped ? Status::warning : Status::pass};
}

ReplayResult replay(const BreakerConfig& breaker, const TraceSet& test) {
  validate(test);
  const int layer = breaker.probe.layer_index;
  if (layer < 0 || layer >= test.header.num_layers) {
    throw ValidationError("probe layer " + std::to_string(layer) + " not present in trace with " +
                          std::to_string(test.header.num_layers) + " layers");
  }
  check_dim(breaker, static_cast<std::size_t>(test.header.hidden_dim));

  ReplayResult out;
  out.verdicts.reserve(test.size());
  std::vector<double> hidden(static_cast<std::size_t>(test.header.hidden_dim));
  auto& c = out.confusion;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto h = test.hidden(i, layer);
    std::copy(h.begin(), h.end(), hidden.begin());
    const auto& rec = test.records[i];
    const Decision d = decide_unchecked(breaker, hidden, static_cast<double>(rec.p_semantic_t));
    out.verdicts.push_back({std::to_string(rec.example_id), d.outward_conf, d.internal_cert, d.delta,
                            d.tripped ? Status::warning : Status::pass});
    const bool hallucination = rec.label == 0;
    if (d.tripped) {
      hallucination ? ++c.tp : ++c.fp;
    } else {
      hallucination ? ++c.fn : ++c.tn;
    }
  }
  c.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  c.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
  c.f1 = denom > 0 ? 2.0 * static_cast<double>(c.tp) / denom : 0.0;
  return out;
}

LatencyStats bench_latency(const BreakerConfig& breaker, int dim, int iterations, std::uint64_t seed) {
  if (iterations < 1000) throw ValidationError("bench needs at least 1000 iterations");
  check_dim(breaker, static_cast<std::size_t>(dim));

  constexpr std::size_t kPool = 64;
  Rng rng(seed);
  std::vector<std::vector<double>> hidden(kPool, std::vector<double>(static_cast<std::size_t>(dim)));
  std::vector<double> semantic(kPool);
  for (std::size_t k = 0; k < kPool; ++k) {
    for (auto& v : hidden[k]) v = rng.normal();
    semantic[k] = rng.uniform();
  }

  using clock = std::chrono::steady_clock;
  std::vector<double> samples(static_cast<std::size_t>(iterations));
  double sink = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const auto k = static_cast<std::size_t>(it) % kPool;
    const auto start = clock::now();
    const Decision d = decide_unchecked(breaker, hidden[k], semantic[k]);
    const auto stop = clock::now();
    sink += d.delta + (d.tripped ? 1.0 : 0.0);
    samples[static_cast<std::size_t>(it)] = std::chrono::duration<double, std::nano>(stop - start).count();
  }
  static volatile double keep;
  keep = sink;

  LatencyStats stats;
  stats.iterations = iterations;
  stats.dim = dim;
  double total = 0.0;
  for (double s : samples) total += s;
  stats.mean_ns = total / static_cast<double>(samples.size());
  std::sort(samples.begin(), samples.end());
  stats.p50_ns = percentile(samples, 0.50);
  stats.p99_ns = percentile(samples, 0.99);
  return stats;
}

double round3(double value) { return std::round(value * 1000.0) / 1000.0; }

nlohmann::ordered_json verdict_record(const Verdict& v) {
  nlohmann::ordered_json j;
  j["Prompt"] = v.prompt_id;
  j["Outward Conf"] = round3(v.outward_conf);
  j["Internal Cert"] = round3(v.internal_cert);
  j["Delta"] = round3(v.delta);
  j["Status"] = std::string(to_string(v.status));
  return j;
}

BreakerEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("monitor input must be a JSON object");
  BreakerEvent e;
  try {
    e.prompt_id = j.at("prompt_id").get<std::string>();
    e.hidden_at_lopt = j.at("hidden").get<std::vector<double>>();
    const bool has_logits = j.contains("logits");
    const bool has_p = j.contains("p_semantic");
    if (has_logits == has_p) throw ValidationError("exactly one of 'logits' or 'p_semantic' is required");
    if (has_logits) {
      e.semantic = j.at("logits").get<std::vector<double>>();
    } else {
      const double p = j.at("p_semantic").get<double>();
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p_semantic must lie in [0, 1]");
      e.semantic = p;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("malformed monitor event: ") + ex.what());
  }
  return e;
}

MonitorStats run_monitor(const BreakerConfig& breaker, std::istream& in, std::ostream& out, std::ostream& err) {
  MonitorStats stats;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); })) continue;
    ++stats.events;
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(line);
      out << verdict_record(evaluate(breaker, event_from_json(parsed))).dump() << '\n';
    } catch (const std::exception& e) {
      ++stats.errors;
      nlohmann::ordered_json j;
      j["Prompt"] = parsed.is_object() && parsed.contains("prompt_id") && parsed["prompt_id"].is_string()
                        ? parsed["prompt_id"]
                        : nlohmann::json(nullptr);
      j["Error"] = e.what();
      out << j.dump() << '\n';
      err << "monitor: line " << line_no << ": " << e.what() << '\n';
    }
    out.flush();
  }
  return stats;
}

nlohmann::ordered_json to_json(const BreakerConfig& breaker) {
  nlohmann::ordered_json j;
  j["probe"] = to_json(breaker.probe);
  j["tau_delta"] = breaker.tau_delta;
  j["temperature"] = breaker.temperature;
  j["source"] = breaker.source;
  return j;
}

BreakerConfig breaker_from_json(const nlohmann::json& j) {
  try {
    return build_breaker(probe_from_json(j.at("probe")), j.at("tau_delta").get<double>(),
                         j.at("temperature").get<double>(), j.value("source", ""));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed breaker config: ") + e.what());
  }
}

}  // namespace ccb
