#pragma once

#include "mdfa/certify.hpp"
#include "mdfa/core.hpp"
#include "mdfa/data.hpp"
#include "mdfa/rebalance.hpp"
#include "mdfa/worst.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mdfa {

// More than the tolerated share (20%) of train/test splits failed.
class AuditFailureError : public Error {
 public:
  using Error::Error;
};

enum class AuditMode { Certify, WorstViolation };

// Hyper-parameters selected by cross-validation; bandwidth is absolute.
struct CvChoice {
  double lambda = 0.1;
  double bandwidth = 1.0;
};

// 5-fold grid search over config.effective_cv_grid(). Median-relative
// bandwidths are resolved once on the full train split. Each grid point is
// scored by held-out surrogate risk plus held-out group discrepancy, both
// averaged over folds and normalized by their grid-wide maxima; the smallest
// score wins, ties broken toward larger lambda, then larger bandwidth.
// Folds missing a sensitive or outcome value are skipped; all folds
// degenerate throws Error. A single-point grid returns without fitting.
CvChoice cross_validate(const AuditDataset& train, const AuditConfig& config,
                        int target_y, int target_s, const WeightScheme& scheme);

// One train/test split of a repeated audit. Metrics are NaN when the split
// failed, or — for delta_hat and dt_g — when their ratio was undefined on an
// otherwise fine split.
struct SplitRecord {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double gamma_hat = 0.0;
  double delta_hat = 0.0;
  double alpha = 0.0;
  double dt_g = 0.0;  // ratio on the flagged subgroup, unweighted
  double di = 0.0;    // aggregate ratio on the whole test split
  double cv_lambda = 0.0;
  double cv_bandwidth = 0.0;
};

struct MetricAggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1); 0 when count < 2
  int count = 0;     // records that contributed
};

struct AuditRunResult {
  AuditMode mode = AuditMode::Certify;
  int target_y = +1;
  int target_s = +1;
  int n_splits = 0;
  std::vector<SplitRecord> per_split;  // exactly n_splits entries
  MetricAggregate gamma, delta, alpha, dt_g, di;
  bool std_undefined = false;  // only one usable split: stds reported as 0
  // Subgroup profile of the representative split (median delta_hat among
  // usable splits; median gamma_hat when no split produced a delta).
  ProfileTable profile;
  int representative_index = -1;
  // Escalation trace of the representative split (WorstViolation mode only).
  std::vector<EscalationStep> trace;
};

// Runs n_splits independent 70/30 audits. Each split derives its own seed
// from config.seed, cross-validates on its train half, then certifies (or
// runs the escalation loop) and records test-side metrics. Failed splits are
// recorded with their error and excluded from the aggregates; more than 20%
// failures aborts with AuditFailureError. threads <= 0 means automatic
// (MDFA_THREADS env var, then hardware concurrency); results do not depend
// on the thread count.
AuditRunResult repeated_audit(const AuditDataset& data, int n_splits,
                              const AuditConfig& config, int target_y, int target_s,
                              const WeightScheme& scheme, AuditMode mode,
                              int threads = 0);

// One row of the weighting-scheme bias table.
struct BiasRow {
  double mu = 0.0;
  std::string scheme;  // "uw", "is-exact" or "mmd"
  double bias_mean = 0.0;
  double bias_std = 0.0;
};

// For each mu in the grid, draws n_seeds synthetic datasets, certifies each
// under uniform, exact-importance and discrepancy-matched weights, and
// records the bias gamma_hat - gamma_true, where gamma_true comes from the
// generator's planted divergence and region mass. Rows are ordered by mu
// (as given), then scheme (uw, is-exact, mmd). Errors propagate.
std::vector<BiasRow> compare_weight_schemes(const SyntheticSpec& base,
                                            const std::vector<double>& mu_grid,
                                            int n_seeds, const AuditConfig& config,
                                            int threads = 0);

// Audits an external classifier: its prediction column replaces the outcome
// and the escalation loop hunts for the worst subgroup of the predictions.
// Throws Error when the dataset carries no prediction column.
AuditRunResult audit_external_predictions(const AuditDataset& data, int n_splits,
                                          const AuditConfig& config, int target_y,
                                          int target_s, const WeightScheme& scheme,
                                          int threads = 0);

// Deterministic JSON rendering of a run (sorted keys, two-space indent,
// trailing newline). NaNs serialize as null.
std::string report_json(const AuditRunResult& result, const AuditConfig& config);

// Tab-separated bias table with header mu/scheme/bias_mean/bias_std.
std::string bias_table_tsv(const std::vector<BiasRow>& rows);

// Stand-alone renderings of a subgroup profile. The TSV has columns
// scope/feature/sensitive_value/mean/stddev/weight (the subgroup fraction is
// available in the JSON form only).
std::string profile_json_text(const ProfileTable& profile);
std::string profile_tsv(const ProfileTable& profile);

// Worker count actually used for n_units parallel units given a request
// (<= 0: MDFA_THREADS env var, then hardware concurrency, floor 1).
int resolve_thread_count(int requested, int n_units);

}  // namespace mdfa
