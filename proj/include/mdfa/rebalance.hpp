#pragma once

#include "mdfa/core.hpp"
#include "mdfa/kernels.hpp"

#include <functional>
#include <optional>

namespace mdfa {

// A propensity hit 0 or 1, so the odds ratio for some sample is undefined.
class CommonSupportError : public Error {
 public:
  using Error::Error;
};

enum class WeightKind { Uniform, ImportanceExact, ImportanceEstimated, MmdMatch };

struct WeightScheme {
  WeightKind kind = WeightKind::Uniform;
  double bound_B = 10.0;   // box bound B of the matcher; entries stay <= B/n_s
  double tolerance = 1e-3; // documented accuracy target of the matcher
  int max_iters = 2000;
  // Pr[S=+1|x]; required for ImportanceExact.
  std::function<double(const Eigen::VectorXd&)> exact_propensity;
};

// Every sample gets mass 1/m.
WeightVector uniform_weights(int m);

// Raw odds reweighting: members of group s get Pr[S!=s_i|x_i]/Pr[S=s_i|x_i],
// everyone else gets 1. `propensity` returns Pr[S=+1|x]; a value of exactly
// 0 or 1 anywhere violates common support and raises CommonSupportError.
WeightVector importance_weights(
    const AuditDataset& data, int s,
    const std::function<double(const Eigen::VectorXd&)>& propensity);

// Logistic model of Pr[S=+1|x] in a feature-map space. Outputs are clamped
// away from {0,1} by 1e-7 so estimated odds stay finite.
struct PropensityModel {
  FeatureMap map;
  Eigen::VectorXd coef;
  double intercept = 0.0;

  double operator()(const Eigen::VectorXd& x) const;
};

PropensityModel fit_propensity(const AuditDataset& train, const FeatureMap& map,
                               double lambda = 1e-3);

struct MmdMatchResult {
  WeightVector weights;    // full length: solved group entries + uniform complement
  bool converged = false;  // projected-gradient fixed point reached
  int iterations = 0;
  double objective = 0.0;  // 0.5 |Phi_s^T u - c|^2 at the returned iterate
};

// Chooses group-s weights u on the simplex with box u_i <= B/n_s so the
// weighted group feature mean matches the complement's unweighted mean c:
// projected gradient descent on 0.5 |Phi_s^T u - c|^2, step 1/lambda_max of
// the Gram matrix (20 power-iteration steps), until the update stalls below
// 1e-10 or max_iters. Returns the best iterate seen. Complement samples get
// uniform mass 1/n_complement, so both groups carry total mass 1.
MmdMatchResult mmd_match_weights(const AuditDataset& data, int s, const FeatureMap& map,
                                 const WeightScheme& scheme);

// Applies one weighting scheme consistently across train/test splits of the
// same audit: estimated propensities are fit on the train split once, the
// matcher re-solves on whichever split it is asked to weight.
class WeightSolver {
 public:
  WeightSolver(const AuditDataset& train, int target_s, WeightScheme scheme, FeatureMap map);

  WeightVector weights_for(const AuditDataset& split) const;
  // Convergence details of the most recent matcher run, if any.
  const std::optional<MmdMatchResult>& last_match() const { return last_match_; }
  WeightKind kind() const { return scheme_.kind; }

 private:
  int target_s_;
  WeightScheme scheme_;
  FeatureMap map_;
  std::optional<PropensityModel> propensity_;
  mutable std::optional<MmdMatchResult> last_match_;
};

}  // namespace mdfa
