#include "mdfa/certify.hpp"

#include <cmath>
#include <map>
#include <utility>
#include <vector>

namespace mdfa {
namespace {

void check_sign(int v, const char* what) {
  if (v != +1 && v != -1) throw Error(std::string(what) + " must be +1 or -1");
}

struct SupportCells {
  double total = 0.0;    // sum of all weights
  double support = 0.0;  // mass of {c=+1, Y=target_y}
  double hit = 0.0;      // mass of {c=+1, Y=target_y, S=target_s}
};

SupportCells tally(const Eigen::VectorXi& sensitive, const Eigen::VectorXi& outcome,
                   const Eigen::VectorXd& weights, const Eigen::VectorXi& indicators,
                   int target_y, int target_s) {
  check_sign(target_y, "target outcome");
  check_sign(target_s, "target sensitive value");
  const Eigen::Index m = sensitive.size();
  if (outcome.size() != m || weights.size() != m || indicators.size() != m) {
    throw Error("estimator inputs disagree on sample count");
  }
  if (!weights.allFinite() || (weights.array() < 0.0).any()) {
    throw Error("estimator weights must be finite and nonnegative");
  }
  SupportCells cells;
  for (Eigen::Index i = 0; i < m; ++i) {
    check_sign(indicators[i], "indicator");
    const double w = weights[i];
    cells.total += w;
    if (indicators[i] == +1 && outcome[i] == target_y) {
      cells.support += w;
      if (sensitive[i] == target_s) cells.hit += w;
    }
  }
  if (cells.total <= 0.0) throw Error("estimator weights have zero total mass");
  return cells;
}

}  // namespace

ReductionLabels reduction_labels(const AuditDataset& data, int target_y) {
  check_sign(target_y, "target outcome");
  Eigen::VectorXi labels(data.size());
  for (int i = 0; i < data.size(); ++i) {
    labels[i] = target_y * data.sensitive()[i] * data.outcome()[i];
  }
  return ReductionLabels{std::move(labels), target_y};
}

double CertifierModel::score(const Eigen::VectorXd& x) const {
  return coef.dot(map(x)) + intercept;
}

Eigen::VectorXd CertifierModel::scores(const AuditDataset& data) const {
  Eigen::VectorXd h = map.apply(data.features()) * coef;
  h.array() += intercept;
  return h;
}

int CertifierModel::indicate(double h, Rng* rng) const {
  if (tie_band_tau <= 0.0) return h >= 0.0 ? +1 : -1;
  const double half = 0.5 * tie_band_tau;
  if (h > half) return +1;
  if (h < -half) return -1;
  if (rng == nullptr) throw Error("randomized tie band needs a random stream");
  return rng->bernoulli((h + half) / tie_band_tau) ? +1 : -1;
}

Eigen::VectorXi CertifierModel::indicators(const AuditDataset& data, Rng* rng) const {
  const Eigen::VectorXd h = scores(data);
  Eigen::VectorXi c(data.size());
  for (int i = 0; i < data.size(); ++i) c[i] = indicate(h[i], rng);
  return c;
}

CertifierModel fit_certifier(const AuditDataset& data, const WeightVector& weights,
                             const ReductionLabels& labels, const FeatureMap& map,
                             const CertifierControls& controls,
                             const Eigen::VectorXd* multipliers,
                             const CertifierModel* warm_start) {
  if (labels.labels.size() != data.size()) throw Error("reduction label length mismatch");
  if (weights.size() != data.size()) throw Error("weight vector length mismatch");
  weights.validate();
  Eigen::VectorXd w = weights.u;
  if (multipliers != nullptr) {
    if (multipliers->size() != data.size()) throw Error("multiplier length mismatch");
    if (!multipliers->allFinite() || (multipliers->array() < 0.0).any()) {
      throw Error("multipliers must be finite and nonnegative");
    }
    w = w.cwiseProduct(*multipliers);
  }

  LinearFitOptions opts;
  opts.lambda = controls.lambda;
  opts.max_iters = controls.max_iters;
  opts.grad_tol = controls.grad_tol;
  opts.loss = controls.loss;

  LinearModelFit warm_fit;
  const LinearModelFit* warm = nullptr;
  if (warm_start != nullptr) {
    warm_fit.coef = warm_start->coef;
    warm_fit.intercept = warm_start->intercept;
    warm = &warm_fit;
  }

  const Eigen::MatrixXd phi = map.apply(data.features());
  auto fit = fit_linear_classifier(phi, labels.labels, w, opts, warm);
  return CertifierModel{map,           std::move(fit.coef), fit.intercept,
                        controls.loss, controls.lambda,     controls.tie_band_tau,
                        fit.iterations, fit.converged};
}

double estimate_gamma(const Eigen::VectorXi& sensitive, const Eigen::VectorXi& outcome,
                      const Eigen::VectorXd& weights, const Eigen::VectorXi& indicators,
                      int target_y, int target_s) {
  const auto cells = tally(sensitive, outcome, weights, indicators, target_y, target_s);
  if (cells.support <= 0.0) {
    throw EmptySupportError("empty certificate support: no weight on {c=+1, Y=target}");
  }
  return (cells.hit - 0.5 * cells.support) / cells.total;
}

double estimate_delta(const Eigen::VectorXi& sensitive, const Eigen::VectorXi& outcome,
                      const Eigen::VectorXd& weights, const Eigen::VectorXi& indicators,
                      int target_y, int target_s) {
  const auto cells = tally(sensitive, outcome, weights, indicators, target_y, target_s);
  const double num = cells.hit;
  const double den = cells.support - cells.hit;
  if (num <= 0.0) {
    throw SampleDivergenceError(
        "unbounded divergence in sample: cell {c=+1, Y=target, S=target} is empty");
  }
  if (den <= 0.0) {
    throw SampleDivergenceError(
        "unbounded divergence in sample: cell {c=+1, Y=target, S!=target} is empty");
  }
  return std::log(num / den);
}

double support_mass(const Eigen::VectorXi& outcome, const Eigen::VectorXd& weights,
                    const Eigen::VectorXi& indicators, int target_y) {
  // Reuse the tally with a dummy sensitive column; only total/support matter.
  const auto cells = tally(Eigen::VectorXi::Constant(outcome.size(), +1), outcome, weights,
                           indicators, target_y, +1);
  return cells.support / cells.total;
}

double estimate_gamma(const AuditDataset& data, const WeightVector& weights,
                      const Eigen::VectorXi& indicators, int target_y, int target_s) {
  return estimate_gamma(data.sensitive(), data.outcome(), weights.u, indicators, target_y,
                        target_s);
}

double estimate_delta(const AuditDataset& data, const WeightVector& weights,
                      const Eigen::VectorXi& indicators, int target_y, int target_s) {
  return estimate_delta(data.sensitive(), data.outcome(), weights.u, indicators, target_y,
                        target_s);
}

double support_mass(const AuditDataset& data, const WeightVector& weights,
                    const Eigen::VectorXi& indicators, int target_y) {
  return support_mass(data.outcome(), weights.u, indicators, target_y);
}

Certificate certify(const AuditDataset& train, const AuditDataset& test,
                    const AuditConfig& config, int target_y, int target_s,
                    const WeightScheme& scheme) {
  config.validate();
  check_sign(target_y, "target outcome");
  check_sign(target_s, "target sensitive value");
  train.validate();
  test.validate();
  if (train.dim() != test.dim()) throw Error("train and test dimensions differ");

  const double bw = resolve_bandwidth(config.kernel_bandwidth, train, mix_seed(config.seed, 2));
  auto map = FeatureMap::random_fourier(train.dim(), config.feature_map_dim, bw,
                                        mix_seed(config.seed, 1));
  WeightSolver solver(train, target_s, scheme, map);

  const auto labels = reduction_labels(train, target_y);
  CertifierControls controls;
  controls.lambda = config.lambda_reg;
  controls.tie_band_tau = config.tie_band_tau;
  auto model = fit_certifier(train, solver.weights_for(train), labels, map, controls);

  const auto test_weights = solver.weights_for(test);
  Rng tie_rng(mix_seed(config.seed, 3));
  const auto c = model.indicators(test, &tie_rng);

  Certificate cert{std::move(model), target_y, target_s};
  cert.gamma_hat = estimate_gamma(test, test_weights, c, target_y, target_s);
  cert.support_mass = support_mass(test, test_weights, c, target_y);
  try {
    cert.delta_hat = estimate_delta(test, test_weights, c, target_y, target_s);
  } catch (const SampleDivergenceError&) {
    cert.delta_hat.reset();
  }
  return cert;
}

OracleResult oracle_best_gamma(const AuditDataset& data, const WeightVector& weights,
                               int target_y, int target_s, int max_distinct) {
  check_sign(target_y, "target outcome");
  check_sign(target_s, "target sensitive value");
  if (weights.size() != data.size()) throw Error("weight vector length mismatch");
  weights.validate();
  if (max_distinct < 1 || max_distinct > 20) throw Error("max_distinct must lie in [1, 20]");

  std::map<std::vector<double>, int> group_index;
  std::vector<int> group_of(static_cast<std::size_t>(data.size()));
  for (int i = 0; i < data.size(); ++i) {
    std::vector<double> key(data.features().row(i).begin(), data.features().row(i).end());
    auto [it, inserted] =
        group_index.emplace(std::move(key), static_cast<int>(group_index.size()));
    group_of[static_cast<std::size_t>(i)] = it->second;
  }
  const int k = static_cast<int>(group_index.size());
  if (k > max_distinct) {
    throw Error("oracle refuses " + std::to_string(k) + " distinct points (limit " +
                std::to_string(max_distinct) + ")");
  }

  OracleResult best;
  bool found = false;
  Eigen::VectorXi c(data.size());
  for (std::uint64_t mask = 0; mask < (1ULL << k); ++mask) {
    for (int i = 0; i < data.size(); ++i) {
      c[i] = (mask >> group_of[static_cast<std::size_t>(i)]) & 1ULL ? +1 : -1;
    }
    double gamma;
    try {
      gamma = estimate_gamma(data, weights, c, target_y, target_s);
    } catch (const EmptySupportError&) {
      continue;
    }
    if (!found || gamma > best.gamma) {
      best.gamma = gamma;
      best.indicators = c;
      found = true;
    }
  }
  if (!found) throw EmptySupportError("no subset has nonempty certificate support");
  return best;
}

}  // namespace mdfa
