#include "mdfa/rebalance.hpp"

#include "mdfa/optim.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace mdfa {
namespace {

double stable_sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double ea = std::exp(a);
  return ea / (1.0 + ea);
}

// Euclidean projection onto { 0 <= u_i <= ub, sum u = 1 } by bisection on
// the shift theta of clip(v - theta, 0, ub).
Eigen::VectorXd project_box_simplex(const Eigen::VectorXd& v, double ub) {
  double lo = v.minCoeff() - ub;
  double hi = v.maxCoeff();
  for (int k = 0; k < 100; ++k) {
    const double mid = 0.5 * (lo + hi);
    const double mass =
        (v.array() - mid).cwiseMax(0.0).cwiseMin(ub).sum();
    if (mass > 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double theta = 0.5 * (lo + hi);
  return (v.array() - theta).cwiseMax(0.0).cwiseMin(ub);
}

}  // namespace

WeightVector uniform_weights(int m) {
  if (m <= 0) throw Error("weight vector length must be positive");
  return WeightVector(Eigen::VectorXd::Constant(m, 1.0 / m));
}

WeightVector importance_weights(
    const AuditDataset& data, int s,
    const std::function<double(const Eigen::VectorXd&)>& propensity) {
  if (s != +1 && s != -1) throw Error("sensitive value must be +1 or -1");
  if (!propensity) throw Error("importance weighting needs a propensity function");

  Eigen::VectorXd u(data.size());
  for (int i = 0; i < data.size(); ++i) {
    const double p_plus = propensity(data.features().row(i).transpose());
    if (!std::isfinite(p_plus) || p_plus <= 0.0 || p_plus >= 1.0) {
      throw CommonSupportError("common support violated at sample " + std::to_string(i) +
                               ": Pr[S=+1|x] = " + std::to_string(p_plus));
    }
    if (data.sensitive()[i] == s) {
      const double p_own = s == +1 ? p_plus : 1.0 - p_plus;
      u[i] = (1.0 - p_own) / p_own;
    } else {
      u[i] = 1.0;
    }
  }
  return WeightVector(std::move(u));
}

double PropensityModel::operator()(const Eigen::VectorXd& x) const {
  const double p = stable_sigmoid(coef.dot(map(x)) + intercept);
  return std::min(1.0 - 1e-7, std::max(1e-7, p));
}

PropensityModel fit_propensity(const AuditDataset& train, const FeatureMap& map,
                               double lambda) {
  const Eigen::MatrixXd phi = map.apply(train.features());
  LinearFitOptions opts;
  opts.lambda = lambda;
  auto fit = fit_linear_classifier(phi, train.sensitive(),
                                   Eigen::VectorXd::Ones(train.size()), opts);
  return PropensityModel{map, std::move(fit.coef), fit.intercept};
}

MmdMatchResult mmd_match_weights(const AuditDataset& data, int s, const FeatureMap& map,
                                 const WeightScheme& scheme) {
  if (s != +1 && s != -1) throw Error("sensitive value must be +1 or -1");
  if (scheme.bound_B < 1.0) {
    throw Error("weight bound B must be at least 1 for a feasible simplex");
  }
  if (scheme.max_iters < 1) throw Error("matcher max_iters must be positive");

  std::vector<int> group, rest;
  for (int i = 0; i < data.size(); ++i) {
    (data.sensitive()[i] == s ? group : rest).push_back(i);
  }
  if (group.empty() || rest.empty()) {
    throw DegenerateSubgroupError("mmd matching needs both sensitive groups present");
  }
  const auto n_s = static_cast<int>(group.size());
  const auto n_o = static_cast<int>(rest.size());

  const Eigen::MatrixXd phi = map.apply(data.features());
  Eigen::MatrixXd phi_s(n_s, map.output_dim());
  for (int k = 0; k < n_s; ++k) phi_s.row(k) = phi.row(group[static_cast<std::size_t>(k)]);
  Eigen::VectorXd target = Eigen::VectorXd::Zero(map.output_dim());
  for (int i : rest) target += phi.row(i).transpose();
  target /= n_o;

  // Largest eigenvalue of Phi_s^T Phi_s by 20 power-iteration steps; its
  // reciprocal is the gradient step.
  Eigen::VectorXd v = Eigen::VectorXd::Constant(map.output_dim(),
                                                1.0 / std::sqrt(map.output_dim()));
  double lam = 0.0;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd w = phi_s.transpose() * (phi_s * v);
    lam = w.norm();
    if (lam <= 1e-300) break;
    v = w / lam;
  }
  const double step = lam > 1e-300 ? 1.0 / lam : 1.0;
  const double ub = scheme.bound_B / n_s;

  Eigen::VectorXd u = Eigen::VectorXd::Constant(n_s, 1.0 / n_s);
  Eigen::VectorXd residual = phi_s.transpose() * u - target;
  double objective = 0.5 * residual.squaredNorm();

  MmdMatchResult result;
  Eigen::VectorXd best_u = u;
  double best_obj = objective;
  for (int t = 1; t <= scheme.max_iters; ++t) {
    const Eigen::VectorXd grad = phi_s * residual;
    Eigen::VectorXd next = project_box_simplex(u - step * grad, ub);
    const double moved = (next - u).lpNorm<Eigen::Infinity>();
    u = std::move(next);
    residual = phi_s.transpose() * u - target;
    objective = 0.5 * residual.squaredNorm();
    result.iterations = t;
    if (objective < best_obj) {
      best_obj = objective;
      best_u = u;
    }
    if (moved <= 1e-10) {
      result.converged = true;
      break;
    }
  }

  Eigen::VectorXd full = Eigen::VectorXd::Constant(data.size(), 1.0 / n_o);
  for (int k = 0; k < n_s; ++k) full[group[static_cast<std::size_t>(k)]] = best_u[k];
  result.weights = WeightVector(std::move(full));
  result.objective = best_obj;
  return result;
}

WeightSolver::WeightSolver(const AuditDataset& train, int target_s, WeightScheme scheme,
                           FeatureMap map)
    : target_s_(target_s), scheme_(std::move(scheme)), map_(std::move(map)) {
  if (target_s != +1 && target_s != -1) throw Error("sensitive value must be +1 or -1");
  switch (scheme_.kind) {
    case WeightKind::Uniform:
    case WeightKind::MmdMatch:
      break;
    case WeightKind::ImportanceExact:
      if (!scheme_.exact_propensity) {
        throw Error("exact importance weighting needs a propensity function");
      }
      break;
    case WeightKind::ImportanceEstimated:
      propensity_ = fit_propensity(train, map_);
      break;
  }
}

WeightVector WeightSolver::weights_for(const AuditDataset& split) const {
  switch (scheme_.kind) {
    case WeightKind::Uniform:
      return uniform_weights(split.size());
    case WeightKind::ImportanceExact:
      return importance_weights(split, target_s_, scheme_.exact_propensity);
    case WeightKind::ImportanceEstimated:
      return importance_weights(split, target_s_, *propensity_);
    case WeightKind::MmdMatch: {
      last_match_ = mmd_match_weights(split, target_s_, map_, scheme_);
      return last_match_->weights;
    }
  }
  throw Error("unreachable weight scheme kind");
}

}  // namespace mdfa
