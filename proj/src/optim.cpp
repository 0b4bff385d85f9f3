#include "mdfa/optim.hpp"

#include <cmath>
#include <sstream>

namespace mdfa {
namespace {

double loss_value(LossKind kind, double t) {
  if (kind == LossKind::Logistic) {
    // log(1 + e^{-t}) without overflow on either tail.
    return t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
  }
  if (t >= 1.0) return 0.0;
  if (t <= 0.0) return 0.5 - t;
  return 0.5 * (1.0 - t) * (1.0 - t);
}

double loss_slope(LossKind kind, double t) {
  if (kind == LossKind::Logistic) {
    if (t >= 0.0) {
      const double e = std::exp(-t);
      return -e / (1.0 + e);
    }
    return -1.0 / (1.0 + std::exp(t));
  }
  if (t >= 1.0) return 0.0;
  if (t <= 0.0) return -1.0;
  return t - 1.0;
}

std::string diverged_message(const std::vector<double>& trace) {
  std::ostringstream os;
  os << "fit lost monotone descent; objective tail:";
  const std::size_t from = trace.size() > 10 ? trace.size() - 10 : 0;
  for (std::size_t i = from; i < trace.size(); ++i) os << " " << trace[i];
  return os.str();
}

}  // namespace

LinearModelFit fit_linear_classifier(const Eigen::MatrixXd& Phi, const Eigen::VectorXi& labels,
                                     const Eigen::VectorXd& weights,
                                     const LinearFitOptions& opts,
                                     const LinearModelFit* warm_start,
                                     std::vector<double>* trace) {
  const Eigen::Index m = Phi.rows();
  const Eigen::Index D = Phi.cols();
  if (m == 0 || D == 0) throw Error("cannot fit on an empty feature matrix");
  if (!Phi.allFinite()) throw Error("feature matrix contains non-finite values");
  if (labels.size() != m) throw Error("label vector length mismatch");
  if (weights.size() != m) throw Error("weight vector length mismatch");
  if (!weights.allFinite() || (weights.array() < 0.0).any() || weights.sum() <= 0.0) {
    throw Error("fit weights must be nonnegative with positive total mass");
  }
  if (opts.lambda < 0.0) throw Error("lambda must be nonnegative");
  if (opts.max_iters < 1) throw Error("max_iters must be at least 1");
  if (!(opts.grad_tol > 0.0)) throw Error("grad_tol must be positive");

  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (labels[i] != +1 && labels[i] != -1) throw Error("labels must be encoded in {-1, +1}");
    z[i] = labels[i];
  }
  const Eigen::VectorXd wn = weights / weights.sum();

  LinearModelFit fit;
  if (warm_start != nullptr) {
    if (warm_start->coef.size() != D) throw Error("warm start has the wrong dimension");
    fit.coef = warm_start->coef;
    fit.intercept = warm_start->intercept;
  } else {
    fit.coef = Eigen::VectorXd::Zero(D);
    fit.intercept = 0.0;
  }

  // 1/L step from the curvature bound of the loss over the augmented
  // features [phi; 1]; with it the Armijo test passes on the first try and
  // backtracking only fires on numerical trouble.
  const double curb = opts.loss == LossKind::Logistic ? 0.25 : 1.0;
  double max_row = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    max_row = std::max(max_row, Phi.row(i).squaredNorm() + 1.0);
  }
  const double eta0 = 1.0 / (curb * max_row + 2.0 * opts.lambda);

  std::vector<double> local_trace;
  std::vector<double>& tr = trace != nullptr ? *trace : local_trace;
  tr.clear();

  auto objective = [&](const Eigen::VectorXd& margins, const Eigen::VectorXd& coef) {
    double f = opts.lambda * coef.squaredNorm();
    for (Eigen::Index i = 0; i < m; ++i) f += wn[i] * loss_value(opts.loss, z[i] * margins[i]);
    return f;
  };

  Eigen::VectorXd margins = Phi * fit.coef;
  margins.array() += fit.intercept;
  double f = objective(margins, fit.coef);
  if (!std::isfinite(f)) throw FitDivergenceError("objective is non-finite at the start");
  tr.push_back(f);

  Eigen::VectorXd slopes(m), grad_coef(D), cand(D), cand_margins(m);
  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    for (Eigen::Index i = 0; i < m; ++i) {
      slopes[i] = wn[i] * z[i] * loss_slope(opts.loss, z[i] * margins[i]);
    }
    grad_coef.noalias() = Phi.transpose() * slopes;
    grad_coef += 2.0 * opts.lambda * fit.coef;
    const double grad_b = slopes.sum();
    const double grad_sq = grad_coef.squaredNorm() + grad_b * grad_b;
    if (std::sqrt(grad_sq) <= opts.grad_tol) {
      fit.converged = true;
      return fit;
    }

    double eta = eta0;
    bool accepted = false;
    double cand_b = 0.0, cand_f = 0.0;
    for (int k = 0; k < 60; ++k) {
      cand = fit.coef - eta * grad_coef;
      cand_b = fit.intercept - eta * grad_b;
      cand_margins.noalias() = Phi * cand;
      cand_margins.array() += cand_b;
      cand_f = objective(cand_margins, cand);
      if (std::isfinite(cand_f) && cand_f <= f - 0.5 * eta * grad_sq) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) throw FitDivergenceError(diverged_message(tr));

    fit.coef.swap(cand);
    fit.intercept = cand_b;
    margins.swap(cand_margins);
    f = cand_f;
    fit.iterations = iter;
    tr.push_back(f);
  }
  return fit;  // hit max_iters; converged stays false
}

}  // namespace mdfa
