#pragma once

#include "mdfa/core.hpp"
#include "mdfa/kernels.hpp"
#include "mdfa/optim.hpp"
#include "mdfa/rebalance.hpp"
#include "mdfa/rng.hpp"

#include <optional>

namespace mdfa {

// A weighted cell of the in-sample divergence ratio is empty.
class SampleDivergenceError : public Error {
 public:
  using Error::Error;
};

// No weighted sample lies in the certificate's support {c=+1, Y=target}.
class EmptySupportError : public Error {
 public:
  using Error::Error;
};

// Binary labels of the agreement reduction: l_i = target_y * s_i * y_i, so
// that predicting l from x is predicting whether S "pulls toward" the target
// outcome at x.
struct ReductionLabels {
  Eigen::VectorXi labels;
  int target_y = +1;
};

ReductionLabels reduction_labels(const AuditDataset& data, int target_y);

// Linear indicator in feature-map space with an optional randomized band of
// width tau around the decision boundary: scores beyond tau/2 in magnitude
// decide deterministically, scores inside the band emit +1 with probability
// (h + tau/2) / tau.
struct CertifierModel {
  FeatureMap map;
  Eigen::VectorXd coef;
  double intercept = 0.0;
  LossKind loss = LossKind::Logistic;
  double lambda_reg = 0.0;
  double tie_band_tau = 0.0;
  int fit_iterations = 0;
  bool fit_converged = false;

  double score(const Eigen::VectorXd& x) const;
  Eigen::VectorXd scores(const AuditDataset& data) const;
  // rng may be null when tau == 0 or no score lands inside the band.
  int indicate(double score, Rng* rng) const;
  Eigen::VectorXi indicators(const AuditDataset& data, Rng* rng = nullptr) const;
};

struct CertifierControls {
  double lambda = 0.1;
  LossKind loss = LossKind::Logistic;
  double tie_band_tau = 0.0;
  int max_iters = 5000;
  double grad_tol = 1e-6;
};

// Weighted fit of the reduction labels. Per-sample weight is
// weights_i * multipliers_i (multipliers default to 1); the escalation loop
// passes growing multipliers and the previous model as a warm start.
CertifierModel fit_certifier(const AuditDataset& data, const WeightVector& weights,
                             const ReductionLabels& labels, const FeatureMap& map,
                             const CertifierControls& controls,
                             const Eigen::VectorXd* multipliers = nullptr,
                             const CertifierModel* warm_start = nullptr);

// Plug-in estimates over weighted samples (weights normalized by total mass):
//   gamma: P[c=+1, Y=ty] * (P[S=ts | c=+1, Y=ty] - 1/2)
//   delta: ln( mass(c=+1, Y=ty, S=ts) / mass(c=+1, Y=ty, S!=ts) )
//   support_mass: P[c=+1, Y=ty]
// gamma throws EmptySupportError when the support is empty; delta throws
// SampleDivergenceError when either of its cells is empty.
double estimate_gamma(const Eigen::VectorXi& sensitive, const Eigen::VectorXi& outcome,
                      const Eigen::VectorXd& weights, const Eigen::VectorXi& indicators,
                      int target_y, int target_s);
double estimate_delta(const Eigen::VectorXi& sensitive, const Eigen::VectorXi& outcome,
                      const Eigen::VectorXd& weights, const Eigen::VectorXi& indicators,
                      int target_y, int target_s);
double support_mass(const Eigen::VectorXi& outcome, const Eigen::VectorXd& weights,
                    const Eigen::VectorXi& indicators, int target_y);

double estimate_gamma(const AuditDataset& data, const WeightVector& weights,
                      const Eigen::VectorXi& indicators, int target_y, int target_s);
double estimate_delta(const AuditDataset& data, const WeightVector& weights,
                      const Eigen::VectorXi& indicators, int target_y, int target_s);
double support_mass(const AuditDataset& data, const WeightVector& weights,
                    const Eigen::VectorXi& indicators, int target_y);

struct Certificate {
  CertifierModel model;
  int target_y = +1;
  int target_s = +1;
  double gamma_hat = 0.0;
  double support_mass = 0.0;            // weighted alpha of {c=+1, Y=target_y}
  std::optional<double> delta_hat;      // absent when a divergence cell is empty
};

// One-shot audit: fit the certifier on the train split under the chosen
// weighting scheme, evaluate the certificate on the test split with
// test-side weights from the same scheme.
Certificate certify(const AuditDataset& train, const AuditDataset& test,
                    const AuditConfig& config, int target_y, int target_s,
                    const WeightScheme& scheme);

struct OracleResult {
  double gamma = 0.0;
  Eigen::VectorXi indicators;  // membership of the best subset, +-1 per sample
};

// Exhaustive search over subsets of distinct feature vectors (indicator
// constant per distinct point). Intended for tiny cross-checks; refuses more
// than max_distinct points. Subsets with empty support are skipped.
OracleResult oracle_best_gamma(const AuditDataset& data, const WeightVector& weights,
                               int target_y, int target_s, int max_distinct = 12);

}  // namespace mdfa
