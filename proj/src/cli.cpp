#include "ccb/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ccb/breaker.hpp"
#include "ccb/errors.hpp"
#include "ccb/layer_sweep.hpp"
#include "ccb/report.hpp"
#include "ccb/synth_forge.hpp"
#include "ccb/trace_store.hpp"

namespace ccb {

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("bad fraction '" + item + "'");
    }
  }
  if (out.size() != 3) throw ValidationError("--fractions needs three comma-separated values");
  return out;
}

struct Options {
  std::uint64_t seed = 42;
  int folds = kDefaultFolds;
  double lambda = kDefaultLambda;
  double temperature = kDefaultTemperature;
  int iterations = kDefaultBootstrapIterations;
  int min_class = kDefaultMinClass;
  double tau = 0.0;
  std::string format = "csv";

  std::string spec, trace, out, curve, sweep, val, breaker, test;
  std::string train_out, val_out, test_out;
  std::string fractions = "0.6,0.2,0.2";
  bool no_balance = false;
};

int cmd_synth(const Options& o, const CLI::App& sub, std::ostream& out) {
  SynthSpec spec = o.spec.empty() ? SynthSpec{} : synth_spec_from_json(read_json_file(o.spec));
  if (sub.get_option("--seed")->count() > 0) spec.noise_seed = o.seed;
  const auto set = generate(spec);
  write_trace(set, o.out);
  out << "wrote " << set.size() << " records (L=" << set.header.num_layers << ", D=" << set.header.hidden_dim
      << ") to " << o.out << '\n';
  return 0;
}

int cmd_split(const Options& o, std::ostream& out) {
  auto set = read_trace(o.trace);
  if (!o.no_balance) set = balance_classes(set, o.seed);
  const auto f = parse_fractions(o.fractions);
  auto [train, val, test] = stratified_split(set, {f[0], f[1], f[2]}, o.seed);
  write_trace(train, o.train_out);
  write_trace(val, o.val_out);
  write_trace(test, o.test_out);
  out << "split " << set.size() << " records into " << train.size() << "/" << val.size() << "/" << test.size()
      << '\n';
  return 0;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const auto train = read_trace(o.trace);
  const auto sweep = run_sweep(train, o.folds, o.seed, o.lambda);
  const auto probe = train_optimal_probe(train, sweep, o.lambda);
  const auto final_probe = train_layer_probe(train, train.header.num_layers - 1, o.lambda);

  nlohmann::ordered_json j = to_json(sweep);
  j["lambda"] = o.lambda;
  j["probe"] = to_json(probe);
  j["final_probe"] = to_json(final_probe);
  write_text_file(o.out, j.dump(2) + "\n");
  if (!o.curve.empty()) write_text_file(o.curve, emergence_csv(sweep));
  out << "l_opt=" << sweep.l_opt << " depth=" << sweep.per_layer[sweep.l_opt].normalized_depth
      << " cv_auroc=" << sweep.per_layer[sweep.l_opt].cv_auroc << " final=" << sweep.final_layer_auroc << '\n';
  return 0;
}

int cmd_calibrate(const Options& o, const CLI::App& sub, std::ostream& out) {
  const auto sweep_json = read_json_file(o.sweep);
  const auto sweep = sweep_from_json(sweep_json);
  ProbeModel probe, final_probe;
  try {
    probe = probe_from_json(sweep_json.at("probe"));
    final_probe = probe_from_json(sweep_json.at("final_probe"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(o.sweep + ": missing probe: " + e.what());
  }
  const auto val = read_trace(o.val);
  double temperature = val.header.stored_temperature;
  if (sub.get_option("--temperature")->count() > 0 && std::abs(o.temperature - temperature) > 1e-12) {
    throw ValidationError("--temperature differs from the temperature stored in the validation trace");
  }
  if (static_cast<std::size_t>(val.header.hidden_dim) != probe.dim() || val.header.num_layers != sweep.num_layers) {
    throw ValidationError("validation trace shape does not match the sweep probe dimension");
  }
  const auto samples = dissonance_samples(probe, val);
  const auto calibration = calibrate(samples, temperature);
  const bool manual = sub.get_option("--tau")->count() > 0;
  const double tau = manual ? o.tau : calibration.tau_delta.tau;

  const auto breaker = build_breaker(probe, tau, temperature,
                                     "calibrated on " + val.header.model_id + "/" + val.header.dataset_id +
                                         (manual ? " (manual tau)" : ""));
  auto j = to_json(breaker);
  nlohmann::ordered_json context;
  context["sweep"] = to_json(sweep);
  context["final_probe"] = to_json(final_probe);
  context["calibration"] = to_json(calibration);
  context["seed"] = sweep.seed;
  context["folds"] = sweep.folds;
  j["report_context"] = context;
  write_text_file(o.out, j.dump(2) + "\n");
  out << "tau_delta=" << tau << " (validation F1 " << calibration.tau_delta.f1
      << "), tau_probe=" << calibration.tau_probe.tau << '\n';
  return 0;
}

int cmd_eval(const Options& o, const CLI::App& sub, std::ostream& out) {
  const auto j = read_json_file(o.breaker);
  const auto breaker = breaker_from_json(j);
  if (!j.contains("report_context")) throw ValidationError(o.breaker + ": no report_context; run calibrate");
  const auto& ctx = j.at("report_context");
  SweepResult sweep;
  ProbeModel final_probe;
  CalibrationOutcome calibration;
  try {
    sweep = sweep_from_json(ctx.at("sweep"));
    final_probe = probe_from_json(ctx.at("final_probe"));
    calibration = calibration_from_json(ctx.at("calibration"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(o.breaker + ": malformed report_context: " + e.what());
  }
  const auto test = read_trace(o.test);
  ReportOptions options;
  options.seed = o.seed;
  options.iterations = o.iterations;
  options.min_class = o.min_class;
  options.tau_delta = sub.get_option("--tau")->count() > 0 ? o.tau : breaker.tau_delta;
  const auto row = build_report(sweep, breaker.probe, final_probe, calibration, test, options);
  const auto text = render({row}, report_format_from_string(o.format));
  if (o.out.empty()) {
    out << text;
  } else {
    write_text_file(o.out, text);
  }
  return 0;
}

int cmd_monitor(const Options& o, std::istream& in, std::ostream& out, std::ostream& err) {
  const auto breaker = breaker_from_json(read_json_file(o.breaker));
  const auto stats = run_monitor(breaker, in, out, err);
  return stats.errors == 0 ? 0 : kExitValidation;
}

int cmd_bench(const Options& o, std::ostream& out) {
  const auto breaker = breaker_from_json(read_json_file(o.breaker));
  const auto stats = bench_latency(breaker, static_cast<int>(breaker.probe.dim()), o.iterations, o.seed);
  nlohmann::ordered_json j;
  j["dim"] = stats.dim;
  j["iterations"] = stats.iterations;
  j["p50_ns"] = stats.p50_ns;
  j["p99_ns"] = stats.p99_ns;
  j["mean_ns"] = stats.mean_ns;
  out << j.dump() << '\n';
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Intrinsic dissonance monitoring: probe sweeps, calibration and a runtime circuit breaker", "ccb"};
  app.require_subcommand(1);

  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Random seed")->capture_default_str(); };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic trace from a SynthSpec JSON file");
  synth->add_option("--spec", o.spec, "SynthSpec JSON (defaults used when omitted)")->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "Output .ccbt path")->required();
  add_seed(synth);

  auto* split = app.add_subcommand("split", "Balance classes and split a trace into train/val/test");
  split->add_option("--trace", o.trace, "Input trace")->required()->check(CLI::ExistingFile);
  split->add_option("--train", o.train_out, "Train output")->required();
  split->add_option("--val", o.val_out, "Validation output")->required();
  split->add_option("--test", o.test_out, "Test output")->required();
  split->add_option("--fractions", o.fractions, "train,val,test fractions")->capture_default_str();
  split->add_flag("--no-balance", o.no_balance, "Skip 50/50 class balancing");
  add_seed(split);

  auto* sweep = app.add_subcommand("sweep", "Per-layer cross-validated probe sweep; selects L_opt");
  sweep->add_option("--trace", o.trace, "Training trace")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", o.out, "Output sweep JSON")->required();
  sweep->add_option("--curve", o.curve, "Emergence curve CSV");
  sweep->add_option("--folds", o.folds, "Cross-validation folds")->capture_default_str()->check(CLI::Range(2, 1000));
  sweep->add_option("--lambda", o.lambda, "L2 strength")->capture_default_str()->check(CLI::PositiveNumber);
  add_seed(sweep);

  auto* cal = app.add_subcommand("calibrate", "Calibrate thresholds on a validation trace");
  cal->add_option("--sweep", o.sweep, "Sweep JSON")->required()->check(CLI::ExistingFile);
  cal->add_option("--val", o.val, "Validation trace")->required()->check(CLI::ExistingFile);
  cal->add_option("--out", o.out, "Output breaker JSON")->required();
  cal->add_option("--temperature", o.temperature, "Temperature (must match the trace)")->check(CLI::PositiveNumber);
  cal->add_option("--tau", o.tau, "Manual tau_delta override");
  add_seed(cal);

  auto* eval = app.add_subcommand("eval", "Evaluate a breaker on a (possibly OOD) test trace");
  eval->add_option("--breaker", o.breaker, "Breaker JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--test", o.test, "Test trace")->required()->check(CLI::ExistingFile);
  eval->add_option("--iterations", o.iterations, "Bootstrap iterations")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--min-class", o.min_class, "Minimum class count for a CI")->capture_default_str();
  eval->add_option("--tau", o.tau, "Manual tau_delta override");
  eval->add_option("--format", o.format, "csv or markdown")->capture_default_str()->check(CLI::IsMember({"csv", "markdown", "md"}));
  eval->add_option("--out", o.out, "Report path (stdout when omitted)");
  add_seed(eval);

  auto* monitor = app.add_subcommand("monitor", "NDJSON circuit breaker: events on stdin, verdicts on stdout");
  monitor->add_option("--breaker", o.breaker, "Breaker JSON")->required()->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "Latency of the evaluate path");
  bench->add_option("--breaker", o.breaker, "Breaker JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--iterations", o.iterations, "Timed evaluations (>= 1000)")->check(CLI::Range(1000, 100000000));
  add_seed(bench);

  std::vector<const char*> argv;
  argv.push_back("ccb");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ccb: " << e.what() << '\n';
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      err << sub->help();
    } else {
      err << app.help();
    }
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, *synth, out);
    if (split->parsed()) return cmd_split(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
    if (cal->parsed()) return cmd_calibrate(o, *cal, out);
    if (eval->parsed()) {
      if (eval->get_option("--iterations")->count() == 0) o.iterations = kDefaultBootstrapIterations;
      return cmd_eval(o, *eval, out);
    }
    if (monitor->parsed()) return cmd_monitor(o, in, out, err);
    if (bench->parsed()) {
      if (bench->get_option("--iterations")->count() == 0) o.iterations = 10000;
      return cmd_bench(o, out);
    }
  } catch (const IoError& e) {
    err << "ccb: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "ccb: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace ccb
