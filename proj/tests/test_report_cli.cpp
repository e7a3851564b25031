#include <fstream>
#include <sstream>

#include "ccb/cli.hpp"
#include "ccb/errors.hpp"
#include "ccb/layer_sweep.hpp"
#include "ccb/report.hpp"
#include "ccb/synth_forge.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace ccb;
using ccbtest::TempDir;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = cli_main(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Pipeline {
  SweepResult sweep;
  ProbeModel probe, final_probe;
  CalibrationOutcome calibration;
  TraceSet test;
};

Pipeline pipeline(const SynthSpec& spec) {
  const auto set = balance_classes(generate(spec), 42);
  auto [tr, va, te] = stratified_split(set, {0.6, 0.2, 0.2}, 42);
  Pipeline p;
  p.sweep = run_sweep(tr, 5, 42);
  p.probe = train_optimal_probe(tr, p.sweep);
  p.final_probe = train_layer_probe(tr, tr.header.num_layers - 1);
  p.calibration = calibrate(dissonance_samples(p.probe, va));
  p.test = std::move(te);
  return p;
}

}  // namespace

TEST_SUITE("reporter_cli") {
  TEST_CASE("cell formats") {
    BootstrapCI ci;
    ci.available = true;
    ci.lower = 0.68;
    ci.upper = 0.73;
    CHECK(auroc_ci_cell(0.708, ci) == "0.708 [0.68, 0.73]");
    ci.available = false;
    CHECK(auroc_ci_cell(0.596, ci) == "0.596 N/A");
    CHECK(f1_tau_cell(0.712, 0.51, "τ") == "0.712 (τ=0.51)");
    CHECK(f1_tau_cell(0.7, -0.094, "τ_Δ") == "0.700 (τ_Δ=-0.09)");
  }

  TEST_CASE("cells parse back at stated precision") {
    Rng rng(3);
    for (int k = 0; k < 100; ++k) {
      BootstrapCI ci;
      ci.available = true;
      ci.lower = rng.uniform();
      ci.upper = ci.lower + rng.uniform() * (1 - ci.lower);
      const double a = rng.uniform();
      const auto parsed = parse_auroc_ci_cell(auroc_ci_cell(a, ci));
      CHECK(std::abs(parsed.auroc - a) <= 0.0005 + 1e-12);
      CHECK(std::abs(*parsed.lower - ci.lower) <= 0.005 + 1e-12);
      CHECK(std::abs(*parsed.upper - ci.upper) <= 0.005 + 1e-12);
      const double tau = rng.normal();
      const auto f = parse_f1_tau_cell(f1_tau_cell(a, tau, "τ_Δ"));
      CHECK(std::abs(f.f1 - a) <= 0.0005 + 1e-12);
      CHECK(std::abs(f.tau - tau) <= 0.005 + 1e-12);
    }
  }

  TEST_CASE("planted run is significant and renders in table order") {
    const auto p = pipeline(SynthSpec{});
    const auto row = build_report(p.sweep, p.probe, p.final_probe, p.calibration, p.test);
    CHECK(row.significance == Significance::star);
    CHECK(row.probe_ci.available);
    CHECK(row.peak_depth >= 0.0);
    CHECK(row.peak_depth <= 1.0);
    CHECK(row.probe_peak_auroc > row.final_layer_auroc);
    const auto csv = render({row, row}, ReportFormat::csv);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.rfind("Model,Task,Peak Depth,Probe Peak AUROC,Probe Max F1 (τ),Δ AUROC,Δ Max F1 (τ_Δ),Final Layer,Sig.,"
                    "Seed,Folds\n",
                    0) == 0);
    const auto md = render({row}, ReportFormat::markdown);
    CHECK(md.find("| synthetic | synth | 0.43 |") != std::string::npos);
    CHECK(md.find("| * |") != std::string::npos);
    CHECK_THROWS_AS(render({}, ReportFormat::csv), ValidationError);
  }

  TEST_CASE("small minority gives N/A") {
    auto p = pipeline(SynthSpec{});
    std::vector<TraceRecord> kept;
    int minority = 0;
    for (const auto& r : p.test.records) {
      if (r.label == 0 && minority++ >= 6) continue;
      kept.push_back(r);
    }
    p.test.records = kept;
    p.test.header.record_count = kept.size();
    const auto row = build_report(p.sweep, p.probe, p.final_probe, p.calibration, p.test);
    CHECK_FALSE(row.probe_ci.available);
    CHECK(row.significance == Significance::na);
    CHECK(render({row}, ReportFormat::csv).find("N/A") != std::string::npos);
  }

  TEST_CASE("zero signal is rarely significant") {
    int ns = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SynthSpec spec;
      spec.peak_signal = 0;
      spec.noise_seed = seed;
      spec.n_examples = 400;
      const auto p = pipeline(spec);
      ReportOptions opt;
      opt.seed = seed;
      ns += build_report(p.sweep, p.probe, p.final_probe, p.calibration, p.test, opt).significance == Significance::ns;
    }
    CHECK(ns >= 18);
  }

  TEST_CASE("incompatible artifacts") {
    const auto p = pipeline(SynthSpec{});
    SynthSpec other;
    other.hidden_dim = 5;
    other.n_examples = 100;
    CHECK_THROWS_AS(build_report(p.sweep, p.probe, p.final_probe, p.calibration, generate(other)), ValidationError);
    CHECK_THROWS_AS(build_report(p.sweep, p.final_probe, p.final_probe, p.calibration, p.test), ValidationError);
  }

  TEST_CASE("cli pipeline") {
    TempDir dir("cli");
    const auto f = [&](const char* name) { return (dir.path / name).string(); };
    {
      std::ofstream(f("spec.json")) << R"({"n_examples": 400})";
    }
    REQUIRE(run({"synth", "--spec", f("spec.json"), "--out", f("all.ccbt")}).code == 0);
    REQUIRE(run({"split", "--trace", f("all.ccbt"), "--train", f("tr.ccbt"), "--val", f("va.ccbt"), "--test",
                 f("te.ccbt")})
                .code == 0);
    REQUIRE(run({"sweep", "--trace", f("tr.ccbt"), "--out", f("sweep.json"), "--curve", f("curve.csv")}).code == 0);
    CHECK(slurp(f("curve.csv")).rfind("normalized_depth,cv_auroc\n", 0) == 0);
    REQUIRE(run({"calibrate", "--sweep", f("sweep.json"), "--val", f("va.ccbt"), "--out", f("br.json")}).code == 0);
    const auto ev = run({"eval", "--breaker", f("br.json"), "--test", f("te.ccbt")});
    REQUIRE(ev.code == 0);
    CHECK(std::count(ev.out.begin(), ev.out.end(), '\n') == 2);
    CHECK(ev.out.find(",42,5\n") != std::string::npos);

    const auto mon = run({"monitor", "--breaker", f("br.json")},
                         "{\"prompt_id\":\"1\",\"hidden\":[" + std::string("0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0") +
                             "],\"p_semantic\":0.9}\n{\"prompt_id\":\"2\",\"hidden\":[" +
                             "1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1" + "],\"logits\":[1,2,3]}\n");
    CHECK(mon.code == 0);
    CHECK(std::count(mon.out.begin(), mon.out.end(), '\n') == 2);
    CHECK(mon.out.find("\"Prompt\":\"1\"") < mon.out.find("\"Prompt\":\"2\""));

    const auto bench = run({"bench", "--breaker", f("br.json"), "--iterations", "2000"});
    CHECK(bench.code == 0);
    CHECK(nlohmann::json::parse(bench.out)["p50_ns"].get<double>() > 0);

    // OOD trace with a different hidden_dim
    {
      std::ofstream(f("ood.json")) << R"({"n_examples": 100, "hidden_dim": 12})";
    }
    REQUIRE(run({"synth", "--spec", f("ood.json"), "--out", f("ood.ccbt")}).code == 0);
    const auto bad = run({"eval", "--breaker", f("br.json"), "--test", f("ood.ccbt")});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("hidden_dim") != std::string::npos);
  }

  TEST_CASE("cli usage errors") {
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"sweep", "--trace", "/nonexistent/x.ccbt", "--out", "/tmp/x.json"}).code == 2);
    CHECK(run({"synth", "--out", "/tmp/x.ccbt", "--wat"}).code == 2);
    CHECK(run({"synth", "--out", "/nonexistent_dir_ccb/x.ccbt"}).code == 2);
    CHECK(run({"--help"}).code == 0);
    TempDir dir("bad");
    const auto spec = (dir.path / "s.json").string();
    {
      std::ofstream(spec) << R"({"n_examples": 7})";
    }
    const auto r = run({"synth", "--spec", spec, "--out", (dir.path / "o.ccbt").string()});
    CHECK(r.code == 1);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("cli determinism") {
    TempDir dir("det");
    const auto f = [&](const std::string& name) { return (dir.path / name).string(); };
    std::string reports[2];
    for (int k = 0; k < 2; ++k) {
      const auto t = std::to_string(k);
      REQUIRE(run({"synth", "--out", f("a" + t), "--seed", "42"}).code == 0);
      REQUIRE(run({"split", "--trace", f("a" + t), "--train", f("tr" + t), "--val", f("va" + t), "--test", f("te" + t),
                   "--seed", "42"})
                  .code == 0);
      REQUIRE(run({"sweep", "--trace", f("tr" + t), "--out", f("s" + t), "--seed", "42"}).code == 0);
      REQUIRE(run({"calibrate", "--sweep", f("s" + t), "--val", f("va" + t), "--out", f("b" + t), "--seed", "42"})
                  .code == 0);
      REQUIRE(run({"eval", "--breaker", f("b" + t), "--test", f("te" + t), "--seed", "42", "--out", f("r" + t)}).code ==
              0);
      reports[k] = slurp(f("r" + t));
    }
    CHECK(!reports[0].empty());
    CHECK(reports[0] == reports[1]);
  }
}
