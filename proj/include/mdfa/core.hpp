#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mdfa {

// Base class for every error raised by the auditing engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// gamma >= alpha/2 would require an infinite delta.
class UnboundedDivergenceError : public Error {
 public:
  using Error::Error;
};

// A conditional cell needed by a ratio estimate carries no weight.
class DegenerateSubgroupError : public Error {
 public:
  using Error::Error;
};

// One individual of the audited population: feature vector, binary sensitive
// attribute and binary classifier outcome, all encoded in {-1, +1}.
struct AuditSample {
  Eigen::VectorXd x;
  int s = +1;
  int y = +1;
};

// Column-oriented sample store. Construction checks the per-sample
// invariants (finite features, s/y in {-1,+1}); validate() additionally
// checks that both sensitive values and both outcome values occur, which is
// the empirical stand-in for the common-support assumption.
class AuditDataset {
 public:
  AuditDataset() = default;
  AuditDataset(Eigen::MatrixXd features, Eigen::VectorXi sensitive,
               Eigen::VectorXi outcome, std::vector<std::string> feature_names);

  int size() const { return static_cast<int>(features_.rows()); }
  int dim() const { return static_cast<int>(features_.cols()); }

  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::VectorXi& sensitive() const { return sensitive_; }
  const Eigen::VectorXi& outcome() const { return outcome_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  // Optional column of external classifier predictions (encoded +-1);
  // present only when the source schema declared one.
  const std::optional<Eigen::VectorXi>& predictions() const { return predictions_; }
  void set_predictions(Eigen::VectorXi p);

  AuditSample sample(int i) const;
  AuditDataset subset(const std::vector<int>& rows) const;
  // Same features and sensitive column, outcomes replaced.
  AuditDataset with_outcome(Eigen::VectorXi new_outcome) const;

  // Throws Error unless both sensitive values and both outcome values occur.
  void validate() const;

 private:
  Eigen::MatrixXd features_;
  Eigen::VectorXi sensitive_;
  Eigen::VectorXi outcome_;
  std::vector<std::string> feature_names_;
  std::optional<Eigen::VectorXi> predictions_;
};

// Per-sample nonnegative weights. Never normalized in place; estimators
// normalize internally so any positive rescaling is observationally inert.
struct WeightVector {
  Eigen::VectorXd u;

  WeightVector() = default;
  explicit WeightVector(Eigen::VectorXd v) : u(std::move(v)) {}

  int size() const { return static_cast<int>(u.size()); }         // NOLINT
  static WeightVector ones(int n) { return WeightVector(Eigen::VectorXd::Ones(n)); }

  // u_i >= 0 for all i, all finite, sum(u) > 0.
  void validate() const;
};

// Kernel bandwidth given either as an absolute value or as a multiple of the
// median pairwise distance computed on the training split.
struct BandwidthSpec {
  bool median_relative = true;
  double value = 1.0;

  static BandwidthSpec absolute(double v) { return {false, v}; }
  static BandwidthSpec median(double factor = 1.0) { return {true, factor}; }
};

// Knobs for the full pipeline. Defaults reproduce the synthetic experiments.
struct AuditConfig {
  int feature_map_dim = 256;
  BandwidthSpec kernel_bandwidth = BandwidthSpec::median();
  double lambda_reg = 0.1;
  double xi = 0.05;            // escalation rate of the worst-violation loop
  double alpha_floor = 0.1;    // minimum subgroup mass the loop may report
  double tie_band_tau = 0.0;   // width of the randomized indicator band
  int max_iterations = 200;    // worst-violation loop cap
  double weight_bound_B = 10.0;
  std::uint64_t seed = 0;
  std::vector<std::pair<double, BandwidthSpec>> cv_grid;

  // cv_grid when set, otherwise the single (lambda_reg, kernel_bandwidth)
  // point, so the grid is never empty.
  std::vector<std::pair<double, BandwidthSpec>> effective_cv_grid() const;

  void validate() const;
};

// --- closed-form fairness metrics -----------------------------------------

// gamma = alpha * (e^delta/(1+e^delta) - 1/2). Strictly increasing in both
// arguments; evaluated in the overflow-free tanh form.
double gamma_from_delta(double delta, double alpha);

// Inverse of gamma_from_delta in its first argument. Throws
// UnboundedDivergenceError once gamma >= alpha/2.
double delta_from_gamma(double gamma, double alpha);

// Weighted ratio P[Y=pos | S=s, G] / P[Y=pos | S!=s, G]. The subgroup is a
// +-1 indicator aligned with the dataset; an all-ones indicator with uniform
// weights yields the aggregate disparate-impact ratio.
double disparate_treatment(const AuditDataset& data, const WeightVector& weights,
                           const Eigen::VectorXi& subgroup, int s,
                           int positive_outcome = +1);

struct GroupStats {
  double mean = 0.0;
  double stddev = 0.0;  // population form: sqrt(sum w (x-mean)^2 / sum w)
  double weight = 0.0;  // total weight of the cell; 0 marks an empty cell
};

struct ProfileEntry {
  std::string name;
  GroupStats s_plus;
  GroupStats s_minus;
};

// Rows are the features followed by one "outcome" row holding the rate of
// Y=+1 (outcome mapped to {0,1} before averaging).
struct ProfileScope {
  std::vector<ProfileEntry> rows;
};

struct ProfileTable {
  ProfileScope population;
  ProfileScope inside;
  ProfileScope outside;
  double subgroup_fraction = 0.0;  // weighted share of samples inside
};

// Per-feature and per-outcome moments split by sensitive value, for the
// subgroup, its complement, and the whole population. Weights optional
// (uniform when null).
ProfileTable subgroup_profile(const AuditDataset& data, const Eigen::VectorXi& subgroup,
                              const WeightVector* weights = nullptr);

}  // namespace mdfa
