#include "ccb/report.hpp"

#include <cstdio>
#include <cmath>
#include <cstdlib>

#include "ccb/errors.hpp"

namespace ccb {

namespace {

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double parse_number(const std::string& text, std::size_t& pos) {
  const char* begin = text.c_str() + pos;
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin) throw ValidationError("cannot parse number in report cell '" + text + "'");
  pos += static_cast<std::size_t>(end - begin);
  return v;
}

std::vector<double> scores_at(const ProbeModel& probe, const TraceSet& set) {
  std::vector<double> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) out[i] = predict_latent(probe, set.hidden(i, probe.layer_index));
  return out;
}

}  // namespace

std::string to_string(Significance s) {
  switch (s) {
    case Significance::star:
      return "*";
    case Significance::ns:
      return "ns";
    case Significance::na:
      break;
  }
  return "N/A";
}

std::vector<DissonanceSample> dissonance_samples(const ProbeModel& probe, const TraceSet& set) {
  std::vector<DissonanceSample> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& rec = set.records[i];
    out.push_back(make_sample(static_cast<double>(rec.p_semantic_t),
                              predict_latent(probe, set.hidden(i, probe.layer_index)), rec.label));
  }
  return out;
}

ReportRow build_report(const SweepResult& sweep, const ProbeModel& probe, const ProbeModel& final_probe,
                       const CalibrationOutcome& calibration, const TraceSet& test, const ReportOptions& options) {
  validate(test);
  const int layers = test.header.num_layers;
  if (sweep.num_layers != layers) {
    throw ValidationError("test trace has " + std::to_string(layers) + " layers, sweep expects " +
                          std::to_string(sweep.num_layers));
  }
  if (static_cast<std::size_t>(test.header.hidden_dim) != probe.dim() || final_probe.dim() != probe.dim()) {
    throw ValidationError("test trace hidden_dim " + std::to_string(test.header.hidden_dim) +
                          " does not match probe dimension " + std::to_string(probe.dim()));
  }
  if (probe.layer_index != sweep.l_opt) throw ValidationError("probe layer does not match sweep l_opt");
  if (final_probe.layer_index != layers - 1) throw ValidationError("reference probe is not at the final layer");
  if (std::abs(test.header.stored_temperature - calibration.temperature) > 1e-12) {
    throw ValidationError("test trace temperature differs from the calibration temperature");
  }

  const auto labels = labels_of(test);
  const auto scores = scores_at(probe, test);
  const auto final_scores = scores_at(final_probe, test);
  const auto samples = dissonance_samples(probe, test);
  const double tau_delta = options.tau_delta.value_or(calibration.tau_delta.tau);

  ReportRow row;
  row.model = test.header.model_id;
  row.task = test.header.dataset_id;
  row.peak_depth = normalized_depth(sweep.l_opt, layers);
  row.probe_peak_auroc = auroc(scores, labels);
  row.probe_ci = bootstrap_ci(scores, labels, options.iterations, options.seed, options.min_class);
  row.tau_probe = calibration.tau_probe.tau;
  row.probe_max_f1 = f1_at(scores, labels, row.tau_probe);
  row.delta_auroc = delta_auroc(samples);
  row.tau_delta = tau_delta;
  row.delta_max_f1 = f1_at(deltas_of(samples), hallucinations_of(samples), tau_delta);
  row.final_layer_auroc = auroc(final_scores, labels);
  row.p_value = paired_bootstrap_pvalue(scores, final_scores, labels, options.iterations, options.seed);
  if (!row.probe_ci.available) {
    row.significance = Significance::na;
  } else {
    row.significance = row.p_value < options.alpha ? Significance::star : Significance::ns;
  }
  row.seed = options.seed;
  row.folds = sweep.folds;
  return row;
}

ReportFormat report_format_from_string(const std::string& text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  throw ValidationError("unknown report format '" + text + "'");
}

std::string auroc_ci_cell(double auroc, const BootstrapCI& ci) {
  std::string cell = fmt("%.3f", auroc);
  if (!ci.available) return cell + " N/A";
  return cell + " [" + fmt("%.2f", ci.lower) + ", " + fmt("%.2f", ci.upper) + "]";
}

std::string f1_tau_cell(double f1, double tau, const std::string& tau_symbol) {
  return fmt("%.3f", f1) + " (" + tau_symbol + "=" + fmt("%.2f", tau) + ")";
}

ParsedAurocCell parse_auroc_ci_cell(const std::string& cell) {
  ParsedAurocCell out;
  std::size_t pos = 0;
  out.auroc = parse_number(cell, pos);
  const auto open = cell.find('[', pos);
  if (open == std::string::npos) return out;
  pos = open + 1;
  out.lower = parse_number(cell, pos);
  pos = cell.find(',', pos) + 1;
  out.upper = parse_number(cell, pos);
  return out;
}

ParsedF1Cell parse_f1_tau_cell(const std::string& cell) {
  ParsedF1Cell out;
  std::size_t pos = 0;
  out.f1 = parse_number(cell, pos);
  const auto eq = cell.find('=', pos);
  if (eq == std::string::npos) throw ValidationError("report cell lacks a threshold: '" + cell + "'");
  pos = eq + 1;
  out.tau = parse_number(cell, pos);
  return out;
}

std::string render(const std::vector<ReportRow>& rows, ReportFormat format) {
  if (rows.empty()) throw ValidationError("report needs at least one row");
  const std::vector<std::string> header = {"Model",   "Task",           "Peak Depth",  "Probe Peak AUROC",
                                           "Probe Max F1 (τ)", "Δ AUROC", "Δ Max F1 (τ_Δ)", "Final Layer",
                                           "Sig."};
  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows) {
    table.push_back({r.model, r.task, fmt("%.2f", r.peak_depth), auroc_ci_cell(r.probe_peak_auroc, r.probe_ci),
                     f1_tau_cell(r.probe_max_f1, r.tau_probe, "τ"), fmt("%.3f", r.delta_auroc),
                     f1_tau_cell(r.delta_max_f1, r.tau_delta, "τ_Δ"), fmt("%.3f", r.final_layer_auroc),
                     to_string(r.significance)});
  }

  std::string out;
  if (format == ReportFormat::csv) {
    const auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
      out += '\n';
    };
    auto head = header;
    head.insert(head.end(), {"Seed", "Folds"});
    line(head);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto cells = table[i];
      cells.push_back(std::to_string(rows[i].seed));
      cells.push_back(std::to_string(rows[i].folds));
      line(cells);
    }
    return out;
  }

  const auto line = [&](const std::vector<std::string>& cells) {
    out += "|";
    for (const auto& c : cells) out += " " + c + " |";
    out += '\n';
  };
  line(header);
  out += "|";
  for (std::size_t i = 0; i < header.size(); ++i) out += i < 2 ? "---|" : ":---:|";
  out += '\n';
  for (const auto& cells : table) line(cells);
  return out;
}

nlohmann::ordered_json to_json(const CalibrationOutcome& c) {
  nlohmann::ordered_json j;
  j["tau_probe"] = {{"tau", c.tau_probe.tau}, {"f1", c.tau_probe.f1}};
  j["tau_delta"] = {{"tau", c.tau_delta.tau}, {"f1", c.tau_delta.f1}};
  j["temperature"] = c.temperature;
  return j;
}

CalibrationOutcome calibration_from_json(const nlohmann::json& j) {
  CalibrationOutcome c;
  try {
    c.tau_probe = {j.at("tau_probe").at("tau").get<double>(), j.at("tau_probe").at("f1").get<double>()};
    c.tau_delta = {j.at("tau_delta").at("tau").get<double>(), j.at("tau_delta").at("f1").get<double>()};
    c.temperature = j.at("temperature").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed calibration JSON: ") + e.what());
  }
  return c;
}

}  // namespace ccb
