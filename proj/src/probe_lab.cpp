#include "ccb/probe_lab.hpp"

#include <algorithm>
#include <deque>
#include <numeric>

#include "ccb/errors.hpp"
#include "ccb/rng.hpp"
#include "ccb/stat_engine.hpp"

namespace ccb {

namespace {

using Vector = Eigen::VectorXd;

void check_labels(std::span<const std::uint8_t> y) {
  std::size_t positives = 0;
  for (auto v : y) {
    if (v > 1) throw ValidationError("labels must be 0 or 1");
    positives += v;
  }
  if (positives == 0 || positives == y.size()) {
    throw DegenerateInputError("probe training needs both classes present");
  }
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// Regularized mean logistic loss over the augmented design [Z, 1].
/// Parameters theta = (w, b); only w is penalized.
class LogisticObjective {
 public:
  LogisticObjective(const Matrix& augmented, const Vector& y, double lambda)
      : a_(augmented), y_(y), lambda_(lambda), n_(static_cast<double>(augmented.rows())) {}

  Eigen::Index dim() const { return a_.cols(); }

  double value(const Vector& theta) const {
    const Vector z = a_ * theta;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z[i]) - y_[i] * z[i];
    const auto w = theta.head(theta.size() - 1);
    return loss / n_ + 0.5 * lambda_ * w.squaredNorm();
  }

  double value_and_gradient(const Vector& theta, Vector& grad) const {
    const Vector z = a_ * theta;
    Vector r(z.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      loss += softplus(z[i]) - y_[i] * z[i];
      r[i] = stable_sigmoid(z[i]) - y_[i];
    }
    grad.noalias() = a_.transpose() * r / n_;
    const auto w = theta.head(theta.size() - 1);
    grad.head(grad.size() - 1) += lambda_ * w;
    return loss / n_ + 0.5 * lambda_ * w.squaredNorm();
  }

  Eigen::MatrixXd hessian(const Vector& theta) const {
    const Vector z = a_ * theta;
    Vector sqrt_s(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double p = stable_sigmoid(z[i]);
      sqrt_s[i] = std::sqrt(p * (1.0 - p));
    }
    const Matrix weighted = sqrt_s.asDiagonal() * a_;
    Eigen::MatrixXd h = weighted.transpose() * weighted / n_;
    for (Eigen::Index k = 0; k + 1 < h.rows(); ++k) h(k, k) += lambda_;
    return h;
  }

 private:
  const Matrix& a_;
  const Vector& y_;
  double lambda_;
  double n_;
};

struct LineSearchResult {
  bool accepted = false;
  double value = 0.0;
};

// Backtracking Armijo search along d; theta and grad are updated in place on success.
LineSearchResult backtrack(const LogisticObjective& obj, Vector& theta, Vector& grad, double f0, const Vector& d,
                           double initial_step) {
  constexpr double kArmijo = 1e-4;
  const double slope = grad.dot(d);
  if (!(slope < 0.0)) return {};
  double t = initial_step;
  Vector candidate(theta.size());
  Vector g(theta.size());
  for (int k = 0; k < 60; ++k, t *= 0.5) {
    candidate = theta + t * d;
    const double f = obj.value_and_gradient(candidate, g);
    if (f <= f0 + kArmijo * t * slope || (k == 59 && f < f0)) {
      theta = candidate;
      grad = g;
      return {true, f};
    }
  }
  return {};
}

void run_newton(const LogisticObjective& obj, Vector& theta, const ProbeFitOptions& opt, FitDiagnostics& diag) {
  Vector grad(theta.size());
  double f = obj.value_and_gradient(theta, grad);
  diag.loss_history.push_back(f);
  while (diag.iterations < opt.max_iterations) {
    diag.gradient_inf_norm = grad.lpNorm<Eigen::Infinity>();
    if (diag.gradient_inf_norm <= opt.gradient_tolerance) {
      diag.converged = true;
      return;
    }
    const Vector d = obj.hessian(theta).ldlt().solve(-grad);
    const auto step = backtrack(obj, theta, grad, f, d, 1.0);
    if (!step.accepted) return;
    f = step.value;
    diag.loss_history.push_back(f);
    ++diag.iterations;
  }
  diag.gradient_inf_norm = grad.lpNorm<Eigen::Infinity>();
  diag.converged = diag.gradient_inf_norm <= opt.gradient_tolerance;
}

void run_lbfgs(const LogisticObjective& obj, Vector& theta, const ProbeFitOptions& opt, FitDiagnostics& diag) {
  constexpr std::size_t kMemory = 10;
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;

  Vector grad(theta.size());
  double f = obj.value_and_gradient(theta, grad);
  diag.loss_history.push_back(f);
  while (diag.iterations < opt.max_iterations) {
    diag.gradient_inf_norm = grad.lpNorm<Eigen::Infinity>();
    if (diag.gradient_inf_norm <= opt.gradient_tolerance) {
      diag.converged = true;
      return;
    }
    // Two-loop recursion.
    Vector q = -grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha[k] - beta) * s_hist[k];
    }
    const double initial_step = s_hist.empty() ? 1.0 / std::max(1.0, grad.norm()) : 1.0;

    const Vector old_theta = theta;
    const Vector old_grad = grad;
    auto step = backtrack(obj, theta, grad, f, q, initial_step);
    if (!step.accepted) {
      // Curvature memory may be stale; retry once along steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      step = backtrack(obj, theta, grad, f, -grad, 1.0 / std::max(1.0, grad.norm()));
      if (!step.accepted) return;
    }
    f = step.value;
    diag.loss_history.push_back(f);
    ++diag.iterations;

    Vector s = theta - old_theta;
    Vector yv = grad - old_grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (s_hist.size() == kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
    }
  }
  diag.gradient_inf_norm = grad.lpNorm<Eigen::Infinity>();
  diag.converged = diag.gradient_inf_norm <= opt.gradient_tolerance;
}

}  // namespace

Matrix Standardizer::transform(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != dim()) throw ValidationError("standardizer dimension mismatch");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) / scale[j];
  }
  return out;
}

Standardizer fit_standardizer(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) throw DegenerateInputError("cannot fit a standardizer on empty data");
  const auto n = static_cast<double>(x.rows());
  Standardizer s;
  s.mean.resize(x.cols());
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).sum() / n;
    const double var = (x.col(j).array() - m).square().sum() / n;
    s.mean[j] = m;
    s.scale[j] = std::max(std::sqrt(var), kMinScale);
  }
  return s;
}

TrainedProbe fit_probe(const Matrix& x, std::span<const std::uint8_t> y, int layer_index,
                       const ProbeFitOptions& options) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw ValidationError("X and y lengths differ");
  if (y.size() < 2) throw DegenerateInputError("probe training needs at least two examples");
  if (!x.allFinite()) throw ValidationError("probe training input contains non-finite values");
  if (!(options.lambda > 0.0) || !std::isfinite(options.lambda)) throw ValidationError("lambda must be positive");
  check_labels(y);

  TrainedProbe out;
  out.model.layer_index = layer_index;
  out.model.lambda = options.lambda;
  out.model.standardizer = fit_standardizer(x);

  const Eigen::Index d = x.cols();
  Matrix augmented(x.rows(), d + 1);
  augmented.leftCols(d) = out.model.standardizer.transform(x);
  augmented.col(d).setOnes();
  Vector target(x.rows());
  for (Eigen::Index i = 0; i < target.size(); ++i) target[i] = y[i];

  const LogisticObjective objective(augmented, target, options.lambda);
  Vector theta = Vector::Zero(d + 1);
  ProbeSolver solver = options.solver;
  if (solver == ProbeSolver::automatic) {
    solver = static_cast<std::size_t>(d) <= kNewtonMaxDim ? ProbeSolver::newton : ProbeSolver::lbfgs;
  }
  if (solver == ProbeSolver::newton) {
    run_newton(objective, theta, options, out.diagnostics);
  } else {
    run_lbfgs(objective, theta, options, out.diagnostics);
  }

  out.model.weights.assign(theta.data(), theta.data() + d);
  out.model.bias = theta[d];
  return out;
}

double predict_latent(const ProbeModel& probe, std::span<const double> h) {
  if (h.size() != probe.dim()) {
    throw ValidationError("hidden vector has dimension " + std::to_string(h.size()) + ", probe expects " +
                          std::to_string(probe.dim()));
  }
  return stable_sigmoid(probe_logit(probe, h));
}

double predict_latent(const ProbeModel& probe, std::span<const float> h) {
  if (h.size() != probe.dim()) {
    throw ValidationError("hidden vector has dimension " + std::to_string(h.size()) + ", probe expects " +
                          std::to_string(probe.dim()));
  }
  return stable_sigmoid(probe_logit(probe, h));
}

std::vector<double> predict_latent_rows(const ProbeModel& probe, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[i] = predict_latent(probe, std::span<const double>(x.row(i).data(), static_cast<std::size_t>(x.cols())));
  }
  return out;
}

std::vector<int> stratified_folds(std::span<const std::uint8_t> y, int folds, std::uint64_t seed) {
  if (folds < 2) throw ValidationError("fold count must be at least 2");
  std::vector<int> assignment(y.size(), 0);
  Rng rng(seed);
  for (std::uint8_t label : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == label) members.push_back(i);
    }
    if (members.size() < static_cast<std::size_t>(folds)) {
      throw DegenerateInputError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                                 " members, fewer than " + std::to_string(folds) + " folds");
    }
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < members.size(); ++k) assignment[members[k]] = static_cast<int>(k % folds);
  }
  return assignment;
}

double cross_val_auroc(const Matrix& x, std::span<const std::uint8_t> y, int folds, std::uint64_t seed,
                       double lambda) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw ValidationError("X and y lengths differ");
  for (auto v : y) {
    if (v > 1) throw ValidationError("labels must be 0 or 1");
  }
  const auto assignment = stratified_folds(y, folds, seed);
  std::vector<double> scores(y.size());
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<Eigen::Index> train_rows, test_rows;
    for (std::size_t i = 0; i < y.size(); ++i) {
      (assignment[i] == fold ? test_rows : train_rows).push_back(static_cast<Eigen::Index>(i));
    }
    Matrix train_x = x(train_rows, Eigen::placeholders::all);
    std::vector<std::uint8_t> train_y(train_rows.size());
    for (std::size_t k = 0; k < train_rows.size(); ++k) train_y[k] = y[train_rows[k]];
    const auto probe = train_probe(train_x, train_y, 0, lambda);
    for (auto row : test_rows) {
      scores[row] = predict_latent(probe, std::span<const double>(x.row(row).data(), x.cols()));
    }
  }
  return auroc(scores, y);
}

Matrix layer_matrix(const TraceSet& set, int layer) {
  if (layer < 0 || layer >= set.header.num_layers) {
    throw ValidationError("layer " + std::to_string(layer) + " out of range");
  }
  Matrix x(static_cast<Eigen::Index>(set.size()), set.header.hidden_dim);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto h = set.hidden(i, layer);
    for (std::size_t j = 0; j < h.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h[j];
  }
  return x;
}

std::vector<std::uint8_t> labels_of(const TraceSet& set) {
  std::vector<std::uint8_t> y(set.size());
  std::transform(set.records.begin(), set.records.end(), y.begin(), [](const TraceRecord& r) { return r.label; });
  return y;
}

nlohmann::json to_json(const ProbeModel& probe) {
  nlohmann::ordered_json j;
  j["layer_index"] = probe.layer_index;
  j["mean"] = probe.standardizer.mean;
  j["scale"] = probe.standardizer.scale;
  j["weights"] = probe.weights;
  j["bias"] = probe.bias;
  j["lambda"] = probe.lambda;
  j["train_meta"] = probe.train_meta;
  return j;
}

ProbeModel probe_from_json(const nlohmann::json& j) {
  ProbeModel p;
  try {
    p.layer_index = j.at("layer_index").get<int>();
    p.standardizer.mean = j.at("mean").get<std::vector<double>>();
    p.standardizer.scale = j.at("scale").get<std::vector<double>>();
    p.weights = j.at("weights").get<std::vector<double>>();
    p.bias = j.at("bias").get<double>();
    p.lambda = j.at("lambda").get<double>();
    p.train_meta = j.value("train_meta", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed probe JSON: ") + e.what());
  }
  const auto d = p.weights.size();
  if (d == 0 || p.standardizer.mean.size() != d || p.standardizer.scale.size() != d) {
    throw ValidationError("probe JSON has inconsistent dimensions");
  }
  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(p.weights) || !finite(p.standardizer.mean) || !std::isfinite(p.bias)) {
    throw ValidationError("probe parameters must be finite");
  }
  for (double s : p.standardizer.scale) {
    if (!(s >= kMinScale) || !std::isfinite(s)) throw ValidationError("probe scale below floor");
  }
  return p;
}

}  // namespace ccb
