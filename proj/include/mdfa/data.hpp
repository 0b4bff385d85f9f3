#pragma once

#include "mdfa/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mdfa {

// A train/test split went degenerate (a half lost one sensitive or outcome value).
class DegenerateSplitError : public Error {
 public:
  using Error::Error;
};

// Maps raw CSV string values of one column onto {-1, +1}. When `negative` is
// absent every value outside `positive` maps to -1; when present, values
// outside both lists are an error (strict mode).
struct ValueMapping {
  std::string column;
  std::vector<std::string> positive;
  std::optional<std::vector<std::string>> negative;

  int map(const std::string& value, std::size_t row) const;
  // Canonical string for writing a +-1 value back out.
  std::string unmap(int v) const;
};

// Declarative description of a CSV source, parsed from a key=value file:
//
//   feature_columns=age,priors_count
//   sensitive_column=race
//   sensitive_positive=African-American
//   outcome_column=two_year_recid
//   outcome_positive=1
//   outcome_negative=0        # optional, enables strict value checking
//   prediction_column=score   # optional
//   prediction_positive=High
//
// Lines starting with '#' and blank lines are ignored.
struct CsvSchema {
  std::vector<std::string> feature_columns;
  ValueMapping sensitive;
  ValueMapping outcome;
  std::optional<ValueMapping> prediction;

  static CsvSchema from_string(const std::string& text);
  static CsvSchema from_file(const std::string& path);
  std::string to_string() const;
};

AuditDataset load_csv(const std::string& path, const CsvSchema& schema);
AuditDataset load_csv_text(const std::string& text, const CsvSchema& schema);

// Writes header + rows; features in full double precision so a reload is
// bit-exact. Write is atomic (temp file + rename).
void save_csv(const std::string& path, const AuditDataset& data, const CsvSchema& schema);

void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Random split: floor(fraction*m) samples go to train, the rest to test,
// original row order preserved within each half. Throws DegenerateSplitError
// when either half loses a sensitive or outcome value.
std::pair<AuditDataset, AuditDataset> split(const AuditDataset& data, double fraction,
                                            std::uint64_t seed);

// Parameters of the planted-violation generator.
struct SyntheticSpec {
  int m = 5000;            // sample count, at least 100
  double mu = 0.2;         // sensitive-attribute dependence strength
  double nu = 0.8;         // violation strength in [0, 1)
  double noise_std = 0.2;  // label noise level
  std::uint64_t seed = 0;

  void validate() const;
};

// Ground truth shipped with a synthetic draw. The planted subgroup G is
// {x : |x| <= 1 and base classifier scores x negative}; inside it the
// positive-outcome rate is 1 for S=+1 and 1-nu for S=-1, hence the
// multi-differential level ln(1/(1-nu)) at outcome +1.
struct SyntheticTruth {
  double delta_m = 0.0;     // planted divergence, target outcome +1
  double alpha_mass = 0.0;  // empirical Pr[x in G and Y=+1]
  Eigen::Vector2d base_coef = Eigen::Vector2d::Zero();
  double base_intercept = 0.0;
  Eigen::VectorXi in_region;  // +-1 flag per generated sample
  double mu = 0.0;
  double nu = 0.0;

  bool in_violating_region(const Eigen::VectorXd& x) const;
  double propensity_positive(const Eigen::VectorXd& x) const;  // Pr[S=+1|x]
};

std::pair<AuditDataset, SyntheticTruth> generate_synthetic(const SyntheticSpec& spec);

}  // namespace mdfa
