#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ccb/dissonance.hpp"
#include "ccb/probe_lab.hpp"
#include "ccb/trace_store.hpp"
#include "json.hpp"

namespace ccb {

inline constexpr std::string_view kStatusWarning = "WARNING: Faking Truthfulness";
inline constexpr std::string_view kStatusPass = "Pass";

struct BreakerConfig {
  ProbeModel probe;
  double tau_delta = 0.0;
  double temperature = kDefaultTemperature;
  std::string source;
};

/// Raw next-token logits, or an already computed outward confidence.
using SemanticInput = std::variant<std::vector<double>, double>;

struct BreakerEvent {
  std::string prompt_id;
  std::vector<double> hidden_at_lopt;
  SemanticInput semantic;
};

enum class Status { warning, pass };

std::string_view to_string(Status status);

struct Verdict {
  std::string prompt_id;
  double outward_conf = 0.0;
  double internal_cert = 0.0;
  double delta = 0.0;
  Status status = Status::pass;
};

/// Allocation-free core of a verdict.
struct Decision {
  double outward_conf = 0.0;
  double internal_cert = 0.0;
  double delta = 0.0;
  bool tripped = false;
};

BreakerConfig build_breaker(ProbeModel probe, double tau_delta, double temperature = kDefaultTemperature,
                            std::string source = {});

/// Trips (WARNING) iff delta > tau_delta. Performs no I/O and no allocation.
Decision decide(const BreakerConfig& breaker, std::span<const double> hidden, double p_semantic);
Decision decide_logits(const BreakerConfig& breaker, std::span<const double> hidden, std::span<const double> logits);

Verdict evaluate(const BreakerConfig& breaker, const BreakerEvent& event);

struct ConfusionSummary {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ReplayResult {
  std::vector<Verdict> verdicts;
  ConfusionSummary confusion;  // WARNING vs. hallucination (label 0)
};

/// Evaluates every record with its stored p_semantic_T and its hidden vector at
/// probe.layer_index, in input order.
ReplayResult replay(const BreakerConfig& breaker, const TraceSet& test);

struct LatencyStats {
  double p50_ns = 0.0;
  double p99_ns = 0.0;
  double mean_ns = 0.0;
  int iterations = 0;
  int dim = 0;
};

/// Wall-clock timing of the evaluate path only, over pre-generated events.
LatencyStats bench_latency(const BreakerConfig& breaker, int dim, int iterations, std::uint64_t seed);

/// Three-decimal rendering used in emitted records.
double round3(double value);

/// Output record with keys "Prompt", "Outward Conf", "Internal Cert", "Delta", "Status".
nlohmann::ordered_json verdict_record(const Verdict& verdict);

/// Parses one monitor input object: "prompt_id", "hidden", and "logits" or "p_semantic".
BreakerEvent event_from_json(const nlohmann::json& j);

struct MonitorStats {
  std::size_t events = 0;
  std::size_t errors = 0;
};

/// NDJSON loop: one output line per non-blank input line, in order. Malformed
/// lines produce {"Prompt": ..., "Error": ...} and a diagnostic on `err`.
MonitorStats run_monitor(const BreakerConfig& breaker, std::istream& in, std::ostream& out, std::ostream& err);

nlohmann::ordered_json to_json(const BreakerConfig& breaker);
BreakerConfig breaker_from_json(const nlohmann::json& j);

}  // namespace ccb
