#pragma once

#include "mdfa/core.hpp"

#include <vector>

namespace mdfa {

// The fitter lost monotone descent (numerical blow-up); the message carries
// the tail of the objective trace for post-mortems.
class FitDivergenceError : public Error {
 public:
  using Error::Error;
};

enum class LossKind { Logistic, SmoothedHinge };

struct LinearFitOptions {
  double lambda = 0.1;      // ridge penalty on the coefficients (not intercept)
  int max_iters = 5000;
  double grad_tol = 1e-6;   // stop when the full gradient norm falls below
  LossKind loss = LossKind::Logistic;
};

struct LinearModelFit {
  Eigen::VectorXd coef;
  double intercept = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Minimizes  sum_i w_i loss(z_i (coef.phi_i + intercept)) / sum_i w_i
//            + lambda |coef|^2
// by full-batch gradient descent with an Armijo backtracking line search
// started at 1/L (L from the curvature bound of the loss), so descent is
// monotone. Optionally warm-started; optionally records the objective value
// per iteration into `trace`.
LinearModelFit fit_linear_classifier(const Eigen::MatrixXd& Phi, const Eigen::VectorXi& labels,
                                     const Eigen::VectorXd& weights,
                                     const LinearFitOptions& opts,
                                     const LinearModelFit* warm_start = nullptr,
                                     std::vector<double>* trace = nullptr);

}  // namespace mdfa
