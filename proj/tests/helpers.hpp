#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ccb/probe_lab.hpp"
#include "ccb/rng.hpp"
#include "ccb/trace_store.hpp"

namespace ccbtest {

/// Pairwise Mann-Whitney count, O(n^2).
inline double brute_auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::int64_t twice = 0, pos = 0, neg = 0;
  for (auto v : y) (v ? pos : neg)++;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      if (s[i] > s[j]) twice += 2;
      else if (s[i] == s[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

inline double brute_f1(const std::vector<double>& s, const std::vector<std::uint8_t>& y, double tau) {
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool pred = s[i] > tau;
    if (pred && y[i]) ++tp;
    else if (pred) ++fp;
    else if (y[i]) ++fn;
  }
  return tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
}

/// Independent candidate grid: every distinct score, values just around it, and the extremes.
inline std::vector<double> brute_grid(const std::vector<double>& s) {
  std::set<double> grid;
  for (double v : s) {
    grid.insert(v);
    grid.insert(std::nextafter(v, -1e300));
    grid.insert(std::nextafter(v, 1e300));
  }
  grid.insert(-1e300);
  grid.insert(1e300);
  return {grid.begin(), grid.end()};
}

/// Plain full-batch gradient descent on the same objective; no line search.
inline std::vector<double> gd_probe_scores(const ccb::Matrix& x, const std::vector<std::uint8_t>& y, double lambda,
                                           const ccb::Matrix& eval) {
  const auto st = ccb::fit_standardizer(x);
  const ccb::Matrix z = st.transform(x);
  const auto n = static_cast<double>(z.rows());
  const auto d = static_cast<std::size_t>(z.cols());
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  // Lipschitz bound of the gradient: 0.25 * (max eigenvalue of Z^T Z / n + 1) + lambda.
  const double frob = z.squaredNorm() / n;
  const double step = 1.0 / (0.25 * (frob + 1.0) + lambda);
  for (int it = 0; it < 200000; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      double t = b;
      for (std::size_t k = 0; k < d; ++k) t += w[k] * z(i, static_cast<Eigen::Index>(k));
      const double r = ccb::stable_sigmoid(t) - y[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < d; ++k) gw[k] += r * z(i, static_cast<Eigen::Index>(k)) / n;
      gb += r / n;
    }
    double gmax = std::abs(gb);
    for (std::size_t k = 0; k < d; ++k) {
      gw[k] += lambda * w[k];
      gmax = std::max(gmax, std::abs(gw[k]));
    }
    if (gmax < 1e-9) break;
    for (std::size_t k = 0; k < d; ++k) w[k] -= step * gw[k];
    b -= step * gb;
  }
  std::vector<double> out;
  for (Eigen::Index i = 0; i < eval.rows(); ++i) {
    double t = b;
    for (std::size_t k = 0; k < d; ++k) {
      t += w[k] * (eval(i, static_cast<Eigen::Index>(k)) - st.mean[k]) / st.scale[k];
    }
    out.push_back(ccb::stable_sigmoid(t));
  }
  return out;
}

inline ccb::TraceSet random_trace(ccb::Rng& rng, std::size_t n, int layers, int dim) {
  ccb::TraceSet s;
  s.header.model_id = "m" + std::to_string(rng.below(1000));
  s.header.dataset_id = "d";
  s.header.num_layers = layers;
  s.header.hidden_dim = dim;
  s.header.extraction_mode = rng.below(2) ? ccb::ExtractionMode::mean : ccb::ExtractionMode::last;
  s.header.stored_temperature = 0.5 + rng.uniform() * 2.0;
  s.header.record_count = n;
  for (std::size_t i = 0; i < n; ++i) {
    ccb::TraceRecord r;
    r.example_id = rng.next_u64();
    r.label = static_cast<std::uint8_t>(rng.below(2));
    r.p_semantic_t = static_cast<float>(rng.uniform());
    r.p_semantic_raw = static_cast<float>(rng.uniform());
    r.hidden.resize(static_cast<std::size_t>(layers * dim));
    for (auto& v : r.hidden) v = static_cast<float>(rng.normal() * 3.0);
    s.records.push_back(std::move(r));
  }
  return s;
}

inline ccb::TraceSet labelled_trace(std::size_t n_pos, std::size_t n_neg, std::uint64_t seed) {
  ccb::Rng rng(seed);
  auto s = random_trace(rng, n_pos + n_neg, 2, 3);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.records[i].label = i < n_pos ? 1 : 0;
    s.records[i].example_id = i;
  }
  return s;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("ccbtest_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace ccbtest
