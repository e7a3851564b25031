#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccb/dissonance.hpp"
#include "ccb/layer_sweep.hpp"
#include "ccb/probe_lab.hpp"
#include "ccb/stat_engine.hpp"
#include "ccb/trace_store.hpp"
#include "json.hpp"

namespace ccb {

enum class Significance { star, ns, na };

std::string to_string(Significance s);

/// One (model, task) row of the summary table.
struct ReportRow {
  std::string model;
  std::string task;
  double peak_depth = 0.0;
  double probe_peak_auroc = 0.0;
  BootstrapCI probe_ci;
  double probe_max_f1 = 0.0;  // test-set F1 at the validation-calibrated tau_probe
  double tau_probe = 0.0;
  double delta_auroc = 0.0;
  double delta_max_f1 = 0.0;  // test-set F1 at the validation-calibrated tau_delta
  double tau_delta = 0.0;
  double final_layer_auroc = 0.0;
  double p_value = 1.0;  // paired bootstrap, l_opt vs. final layer
  Significance significance = Significance::na;
  std::uint64_t seed = 42;
  int folds = kDefaultFolds;
};

struct ReportOptions {
  std::uint64_t seed = 42;
  int iterations = kDefaultBootstrapIterations;
  int min_class = kDefaultMinClass;
  double alpha = 0.05;
  /// Overrides calibration.tau_delta when set.
  std::optional<double> tau_delta;
};

/// Scores `test` with the l_opt probe and the final-layer reference probe.
/// Significance is star iff the CI is available and the paired bootstrap p is
/// below alpha; na whenever the CI is unavailable.
ReportRow build_report(const SweepResult& sweep, const ProbeModel& probe, const ProbeModel& final_probe,
                       const CalibrationOutcome& calibration, const TraceSet& test, const ReportOptions& options = {});

enum class ReportFormat { csv, markdown };

ReportFormat report_format_from_string(const std::string& text);

std::string render(const std::vector<ReportRow>& rows, ReportFormat format);

/// Cell renderers (shared by both formats).
std::string auroc_ci_cell(double auroc, const BootstrapCI& ci);
std::string f1_tau_cell(double f1, double tau, const std::string& tau_symbol);

struct ParsedAurocCell {
  double auroc = 0.0;
  std::optional<double> lower;
  std::optional<double> upper;
};
ParsedAurocCell parse_auroc_ci_cell(const std::string& cell);

struct ParsedF1Cell {
  double f1 = 0.0;
  double tau = 0.0;
};
ParsedF1Cell parse_f1_tau_cell(const std::string& cell);

/// Probe-side samples on a trace: stored p_semantic_T against P_latent at probe.layer_index.
std::vector<DissonanceSample> dissonance_samples(const ProbeModel& probe, const TraceSet& set);

nlohmann::ordered_json to_json(const CalibrationOutcome& c);
CalibrationOutcome calibration_from_json(const nlohmann::json& j);

}  // namespace ccb
