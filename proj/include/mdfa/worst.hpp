#pragma once

#include "mdfa/certify.hpp"
#include "mdfa/core.hpp"
#include "mdfa/rebalance.hpp"

#include <vector>

namespace mdfa {

// The very first iterate already sits at or below the support floor, so no
// violation level can be reported at this floor.
class FloorTooHighError : public Error {
 public:
  using Error::Error;
};

// One evaluated iterate of the escalation loop. `skipped` marks iterates
// whose divergence ratio had an empty cell; they stay in the trace but are
// never reported.
struct EscalationStep {
  int iteration = 0;
  double delta_hat = 0.0;  // NaN when skipped
  double alpha_hat = 0.0;
  double gamma_hat = 0.0;  // NaN when the support itself was empty
  bool skipped = false;
};

struct ViolationReport {
  double delta_hat = 0.0;  // divergence level of the reported subgroup
  double alpha_hat = 0.0;  // its weighted support mass
  Certificate certificate;
  std::vector<EscalationStep> trace;
  ProfileTable profile;                     // unweighted feature profile on test
  double disparate_treatment_ratio = 0.0;   // unweighted, on the test split
  int reported_iteration = 0;
  bool converged_to_floor = false;  // false when max_iterations ran out first
  Eigen::VectorXd final_multipliers;        // train-side escalation state
};

// Searches for the subgroup with the worst divergence at the target outcome:
// repeatedly fit the agreement certifier, evaluate (alpha, delta) on the test
// split, then escalate the fit weight of train samples holding the target
// outcome in the non-target group by xi. Escalation prices balanced regions
// out of the certifier's support, so the support mass alpha shrinks toward
// the genuinely violated subgroup. The loop stops once alpha falls to
// config.alpha_floor (or after config.max_iterations) and reports the last
// iterate still above the floor.
ViolationReport worst_violation(const AuditDataset& train, const AuditDataset& test,
                                const AuditConfig& config, int target_y, int target_s,
                                const WeightScheme& scheme);

}  // namespace mdfa
