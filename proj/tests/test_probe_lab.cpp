#include "ccb/errors.hpp"
#include "ccb/stat_engine.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace ccb;

namespace {

struct Data {
  Matrix x;
  std::vector<std::uint8_t> y;
};

// Two Gaussian classes separated by `signal` along the first axis.
Data gaussian_data(std::size_t n, int d, double signal, std::uint64_t seed) {
  Rng rng(seed);
  Data out{Matrix(static_cast<Eigen::Index>(n), d), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint8_t>(i % 2);
    out.y.push_back(label);
    for (int k = 0; k < d; ++k) out.x(static_cast<Eigen::Index>(i), k) = rng.normal();
    out.x(static_cast<Eigen::Index>(i), 0) += label ? signal : -signal;
  }
  return out;
}

}  // namespace

TEST_SUITE("probe_lab") {
  TEST_CASE("standardizer two-point case") {
    Matrix x(2, 2);
    x << 0, 0, 2, 2;
    const auto st = fit_standardizer(x);
    CHECK(st.mean == std::vector<double>{1, 1});
    CHECK(st.scale == std::vector<double>{1, 1});
  }

  TEST_CASE("standardizer floors constant columns") {
    Matrix x(3, 2);
    x << 1, 5, 2, 5, 3, 5;
    const auto st = fit_standardizer(x);
    CHECK(st.scale[1] == kMinScale);
    CHECK_THROWS_AS(fit_standardizer(Matrix(0, 2)), DegenerateInputError);
  }

  TEST_CASE("standardized moments") {
    auto data = gaussian_data(101, 5, 0.7, 3);
    data.x.col(2) *= 40.0;
    data.x.col(3).array() += 1e3;
    data.x.col(4).setConstant(2.5);
    const auto z = fit_standardizer(data.x).transform(data.x);
    for (int k = 0; k < 5; ++k) {
      const double mean = z.col(k).mean();
      const double sd = std::sqrt((z.col(k).array() - mean).square().mean());
      CHECK(std::abs(mean) < 1e-9);
      if (k == 4) {
        CHECK(sd == doctest::Approx(0.0));
      } else {
        CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("separable 1-D data") {
    Matrix x(4, 2);
    x << -1, 0, -2, 0, 1, 0, 2, 0;
    const std::vector<std::uint8_t> y = {0, 0, 1, 1};
    const auto probe = train_probe(x, y, 0, 1.0);
    CHECK(probe.weights[0] > 0);
    CHECK(std::abs(probe.weights[1]) < 1e-9);
    CHECK(auroc(predict_latent_rows(probe, x), y) == 1.0);
  }

  TEST_CASE("optimality and monotone loss") {
    for (int d : {4, 40, 300}) {
      const auto data = gaussian_data(200, d, 0.8, static_cast<std::uint64_t>(d));
      const auto fit = fit_probe(data.x, data.y, 0);
      CHECK(fit.diagnostics.converged);
      CHECK(fit.diagnostics.gradient_inf_norm <= 1e-6);
      const auto& h = fit.diagnostics.loss_history;
      REQUIRE(h.size() >= 2);
      for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1] + 1e-12);
    }
  }

  TEST_CASE("solvers agree with a gradient-descent oracle") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto data = gaussian_data(150, 8, 0.6, seed);
      const auto held = gaussian_data(60, 8, 0.6, seed + 100);
      const auto oracle = ccbtest::gd_probe_scores(data.x, data.y, 1.0, held.x);
      for (auto solver : {ProbeSolver::newton, ProbeSolver::lbfgs}) {
        ProbeFitOptions opt;
        opt.solver = solver;
        const auto probe = fit_probe(data.x, data.y, 0, opt).model;
        const auto got = predict_latent_rows(probe, held.x);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - oracle[i]) < 1e-4);
      }
    }
  }

  TEST_CASE("training is deterministic") {
    const auto data = gaussian_data(120, 6, 0.5, 8);
    CHECK(train_probe(data.x, data.y, 2) == train_probe(data.x, data.y, 2));
  }

  TEST_CASE("training errors") {
    const auto data = gaussian_data(10, 2, 0.5, 9);
    CHECK_THROWS_AS(train_probe(data.x, std::vector<std::uint8_t>(10, 1), 0), DegenerateInputError);
    auto bad = data.x;
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(train_probe(bad, data.y, 0), ValidationError);
    CHECK_THROWS_AS(train_probe(data.x, std::vector<std::uint8_t>(9, 1), 0), ValidationError);
  }

  TEST_CASE("predict_latent fixed points") {
    ProbeModel p;
    p.standardizer = {{0, 0, 0}, {1, 1, 1}};
    p.weights = {0, 0, 0};
    const std::vector<double> h = {3, -7, 1e6};
    CHECK(predict_latent(p, h) == 0.5);
    p.bias = 20;
    CHECK(predict_latent(p, h) >= 0.999999);
    p.bias = 0;
    p.weights = {1, 0, 0};
    const std::vector<double> pre = {std::log(0.003 / 0.997), 0, 0};
    CHECK(predict_latent(p, pre) == doctest::Approx(0.003).epsilon(1e-12));
    CHECK_THROWS_AS(predict_latent(p, std::vector<double>{1, 2}), ValidationError);
  }

  TEST_CASE("predict_latent stays in the open interval and is monotone") {
    ProbeModel p;
    p.standardizer = {{0}, {1}};
    p.weights = {1};
    double prev = 0;
    for (double z = -30; z <= 30; z += 0.5) {
      const double v = predict_latent(p, std::vector<double>{z});
      CHECK(v > 0);
      CHECK(v < 1);
      CHECK(v > prev);
      prev = v;
    }
  }

  TEST_CASE("random labels give chance held-out AUROC") {
    int inside = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto data = gaussian_data(500, 8, 0.0, seed);
      Rng rng(seed + 1000);
      for (auto& v : data.y) v = static_cast<std::uint8_t>(rng.below(2));
      const auto held = gaussian_data(500, 8, 0.0, seed + 500);
      auto held_y = held.y;
      for (auto& v : held_y) v = static_cast<std::uint8_t>(rng.below(2));
      const auto probe = train_probe(data.x, data.y, 0);
      const double a = auroc(predict_latent_rows(probe, held.x), held_y);
      inside += a >= 0.35 && a <= 0.65;
    }
    CHECK(inside == 20);
  }

  TEST_CASE("cross-validation") {
    const auto sep = gaussian_data(100, 3, 50.0, 4);
    CHECK(cross_val_auroc(sep.x, sep.y, 5, 1) == 1.0);
    const auto data = gaussian_data(200, 4, 0.5, 5);
    CHECK(cross_val_auroc(data.x, data.y, 5, 9) == cross_val_auroc(data.x, data.y, 5, 9));
    std::vector<std::uint8_t> few(10, 0);
    few[0] = few[1] = few[2] = 1;
    CHECK_THROWS_AS(cross_val_auroc(Matrix::Random(10, 2), few, 5, 1), DegenerateInputError);
  }

  TEST_CASE("stratified folds balance each class") {
    std::vector<std::uint8_t> y(53, 0);
    for (std::size_t i = 0; i < 21; ++i) y[i * 2] = 1;
    const auto folds = stratified_folds(y, 5, 3);
    for (int f = 0; f < 5; ++f) {
      int pos = 0, neg = 0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (folds[i] == f) (y[i] ? pos : neg)++;
      }
      CHECK(pos >= 4);
      CHECK(pos <= 5);
      CHECK(neg >= 6);
      CHECK(neg <= 7);
    }
  }

  TEST_CASE("probe JSON round-trip") {
    const auto data = gaussian_data(80, 5, 1.0, 6);
    const auto probe = train_probe(data.x, data.y, 4);
    CHECK(probe_from_json(nlohmann::json::parse(to_json(probe).dump())) == probe);
    auto j = to_json(probe);
    j["weights"].erase(0);
    CHECK_THROWS_AS(probe_from_json(j), ValidationError);
  }
}
