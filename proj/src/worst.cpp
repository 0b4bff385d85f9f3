#include "mdfa/worst.hpp"

#include "mdfa/optim.hpp"
#include "mdfa/rng.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace mdfa {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Snapshot {
  LinearModelFit fit;
  Eigen::VectorXi indicators;
  double delta = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  int iteration = 0;
  bool valid = false;
};

}  // namespace

ViolationReport worst_violation(const AuditDataset& train, const AuditDataset& test,
                                const AuditConfig& config, int target_y, int target_s,
                                const WeightScheme& scheme) {
  config.validate();
  if (target_y != +1 && target_y != -1) throw Error("target outcome must be +1 or -1");
  if (target_s != +1 && target_s != -1) throw Error("target sensitive value must be +1 or -1");
  train.validate();
  test.validate();
  if (train.dim() != test.dim()) throw Error("train and test dimensions differ");

  const double bw = resolve_bandwidth(config.kernel_bandwidth, train, mix_seed(config.seed, 2));
  auto map = FeatureMap::random_fourier(train.dim(), config.feature_map_dim, bw,
                                        mix_seed(config.seed, 1));
  WeightSolver solver(train, target_s, scheme, map);
  const WeightVector train_weights = solver.weights_for(train);
  const WeightVector test_weights = solver.weights_for(test);

  const Eigen::MatrixXd phi_train = map.apply(train.features());
  const Eigen::MatrixXd phi_test = map.apply(test.features());
  const auto labels = reduction_labels(train, target_y);

  LinearFitOptions fit_opts;
  fit_opts.lambda = config.lambda_reg;
  fit_opts.loss = LossKind::Logistic;

  // Escalation targets: train samples holding the target outcome in the
  // other sensitive group; their reduction labels pull the certifier away
  // from regions where the non-target group also receives the outcome.
  Eigen::VectorXd multipliers = Eigen::VectorXd::Ones(train.size());
  std::vector<int> escalate;
  for (int i = 0; i < train.size(); ++i) {
    if (train.outcome()[i] == target_y && train.sensitive()[i] != target_s) {
      escalate.push_back(i);
    }
  }

  Rng tie_rng(mix_seed(config.seed, 3));
  ViolationReport report;
  Snapshot best;
  LinearModelFit fit;
  bool have_fit = false;

  for (int t = 1; t <= config.max_iterations; ++t) {
    const Eigen::VectorXd w = train_weights.u.cwiseProduct(multipliers);
    fit = fit_linear_classifier(phi_train, labels.labels, w, fit_opts,
                                have_fit ? &fit : nullptr);
    have_fit = true;

    Eigen::VectorXd scores = phi_test * fit.coef;
    scores.array() += fit.intercept;
    Eigen::VectorXi c(test.size());
    {
      // Same band semantics as CertifierModel::indicate.
      const double half = 0.5 * config.tie_band_tau;
      for (int i = 0; i < test.size(); ++i) {
        if (config.tie_band_tau <= 0.0) {
          c[i] = scores[i] >= 0.0 ? +1 : -1;
        } else if (scores[i] > half) {
          c[i] = +1;
        } else if (scores[i] < -half) {
          c[i] = -1;
        } else {
          c[i] = tie_rng.bernoulli((scores[i] + half) / config.tie_band_tau) ? +1 : -1;
        }
      }
    }

    EscalationStep step;
    step.iteration = t;
    step.alpha_hat = support_mass(test, test_weights, c, target_y);
    step.delta_hat = kNaN;
    step.gamma_hat = kNaN;
    if (step.alpha_hat > 0.0) {
      step.gamma_hat = estimate_gamma(test, test_weights, c, target_y, target_s);
      try {
        step.delta_hat = estimate_delta(test, test_weights, c, target_y, target_s);
      } catch (const SampleDivergenceError&) {
        step.skipped = true;
      }
    } else {
      step.skipped = true;
    }
    report.trace.push_back(step);

    if (step.alpha_hat <= config.alpha_floor) {
      if (t == 1) {
        throw FloorTooHighError(
            "support mass starts at or below alpha_floor; nothing above the floor to report");
      }
      report.converged_to_floor = true;
      break;
    }
    if (!step.skipped) {
      best.fit = fit;
      best.indicators = c;
      best.delta = step.delta_hat;
      best.alpha = step.alpha_hat;
      best.gamma = step.gamma_hat;
      best.iteration = t;
      best.valid = true;
    }

    if (t < config.max_iterations) {
      for (int i : escalate) multipliers[i] += config.xi;
    }
  }

  if (!best.valid) {
    throw SampleDivergenceError(
        "no iterate above the floor had both divergence cells populated");
  }

  report.delta_hat = best.delta;
  report.alpha_hat = best.alpha;
  report.reported_iteration = best.iteration;
  report.final_multipliers = std::move(multipliers);

  CertifierModel model{map,
                       best.fit.coef,
                       best.fit.intercept,
                       LossKind::Logistic,
                       config.lambda_reg,
                       config.tie_band_tau,
                       best.fit.iterations,
                       best.fit.converged};
  Certificate cert{std::move(model), target_y, target_s};
  cert.gamma_hat = best.gamma;
  cert.support_mass = best.alpha;
  cert.delta_hat = best.delta;
  report.certificate = std::move(cert);

  report.disparate_treatment_ratio = disparate_treatment(
      test, WeightVector::ones(test.size()), best.indicators, target_s, target_y);
  report.profile = subgroup_profile(test, best.indicators);
  return report;
}

}  // namespace mdfa
