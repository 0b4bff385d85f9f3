#include "mdfa/core.hpp"

#include <cmath>
#include <sstream>

namespace mdfa {
namespace {

bool is_sign(int v) { return v == +1 || v == -1; }

std::string cell_name(int s, int y) {
  std::ostringstream os;
  os << "{S=" << (s > 0 ? "+1" : "-1") << ", Y=" << (y > 0 ? "+1" : "-1") << "}";
  return os.str();
}

}  // namespace

AuditDataset::AuditDataset(Eigen::MatrixXd features, Eigen::VectorXi sensitive,
                           Eigen::VectorXi outcome, std::vector<std::string> feature_names)
    : features_(std::move(features)),
      sensitive_(std::move(sensitive)),
      outcome_(std::move(outcome)),
      feature_names_(std::move(feature_names)) {
  const auto m = features_.rows();
  if (sensitive_.size() != m || outcome_.size() != m) {
    throw Error("dataset columns disagree on sample count");
  }
  if (!feature_names_.empty() &&
      static_cast<Eigen::Index>(feature_names_.size()) != features_.cols()) {
    throw Error("feature name count does not match feature dimension");
  }
  if (!features_.allFinite()) {
    throw Error("dataset contains non-finite feature values");
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!is_sign(sensitive_[i]) || !is_sign(outcome_[i])) {
      throw Error("sensitive attribute and outcome must be encoded in {-1, +1}");
    }
  }
  if (feature_names_.empty()) {
    feature_names_.reserve(static_cast<std::size_t>(features_.cols()));
    for (Eigen::Index j = 0; j < features_.cols(); ++j) {
      feature_names_.push_back("x" + std::to_string(j + 1));
    }
  }
}

void AuditDataset::set_predictions(Eigen::VectorXi p) {
  if (p.size() != features_.rows()) {
    throw Error("prediction column length does not match sample count");
  }
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!is_sign(p[i])) throw Error("predictions must be encoded in {-1, +1}");
  }
  predictions_ = std::move(p);
}

AuditSample AuditDataset::sample(int i) const {
  if (i < 0 || i >= size()) throw Error("sample index out of range");
  return AuditSample{features_.row(i).transpose(), sensitive_[i], outcome_[i]};
}

AuditDataset AuditDataset::subset(const std::vector<int>& rows) const {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), features_.cols());
  Eigen::VectorXi s(static_cast<Eigen::Index>(rows.size()));
  Eigen::VectorXi y(static_cast<Eigen::Index>(rows.size()));
  Eigen::VectorXi p;
  if (predictions_) p.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int i = rows[k];
    if (i < 0 || i >= size()) throw Error("subset row index out of range");
    const auto idx = static_cast<Eigen::Index>(k);
    f.row(idx) = features_.row(i);
    s[idx] = sensitive_[i];
    y[idx] = outcome_[i];
    if (predictions_) p[idx] = (*predictions_)[i];
  }
  AuditDataset out(std::move(f), std::move(s), std::move(y), feature_names_);
  if (predictions_) out.set_predictions(std::move(p));
  return out;
}

AuditDataset AuditDataset::with_outcome(Eigen::VectorXi new_outcome) const {
  AuditDataset out(features_, sensitive_, std::move(new_outcome), feature_names_);
  if (predictions_) out.set_predictions(*predictions_);
  return out;
}

void AuditDataset::validate() const {
  if (size() == 0) throw Error("dataset is empty");
  bool s_plus = false, s_minus = false, y_plus = false, y_minus = false;
  for (Eigen::Index i = 0; i < sensitive_.size(); ++i) {
    (sensitive_[i] > 0 ? s_plus : s_minus) = true;
    (outcome_[i] > 0 ? y_plus : y_minus) = true;
  }
  if (!s_plus || !s_minus) {
    throw Error("dataset lacks common support: only one sensitive value present");
  }
  if (!y_plus || !y_minus) {
    throw Error("dataset is degenerate: only one outcome value present");
  }
}

void WeightVector::validate() const {
  if (u.size() == 0) throw Error("weight vector is empty");
  if (!u.allFinite()) throw Error("weight vector contains non-finite entries");
  if ((u.array() < 0.0).any()) throw Error("weight vector contains negative entries");
  if (u.sum() <= 0.0) throw Error("weight vector has zero total mass");
}

std::vector<std::pair<double, BandwidthSpec>> AuditConfig::effective_cv_grid() const {
  if (!cv_grid.empty()) return cv_grid;
  return {{lambda_reg, kernel_bandwidth}};
}

void AuditConfig::validate() const {
  if (feature_map_dim <= 0) throw Error("feature_map_dim must be positive");
  if (feature_map_dim % 2 != 0) throw Error("feature_map_dim must be even");
  if (kernel_bandwidth.value <= 0.0) throw Error("kernel bandwidth must be positive");
  if (lambda_reg < 0.0) throw Error("lambda_reg must be nonnegative");
  if (xi < 0.0) throw Error("xi must be nonnegative");
  if (alpha_floor < 0.0 || alpha_floor >= 1.0) throw Error("alpha_floor must lie in [0, 1)");
  if (tie_band_tau < 0.0) throw Error("tie_band_tau must be nonnegative");
  if (max_iterations < 1) throw Error("max_iterations must be at least 1");
  if (weight_bound_B <= 0.0) throw Error("weight_bound_B must be positive");
  for (const auto& [lambda, bw] : cv_grid) {
    if (lambda < 0.0) throw Error("cv_grid lambda must be nonnegative");
    if (bw.value <= 0.0) throw Error("cv_grid bandwidth must be positive");
  }
}

double gamma_from_delta(double delta, double alpha) {
  if (!(delta >= 0.0)) throw Error("delta must be nonnegative");
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  // alpha * (e^d/(1+e^d) - 1/2) == alpha/2 * tanh(d/2), stable for large d.
  return 0.5 * alpha * std::tanh(0.5 * delta);
}

double delta_from_gamma(double gamma, double alpha) {
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  if (gamma < 0.0) throw Error("gamma must be nonnegative");
  const double ratio = 2.0 * gamma / alpha;
  if (ratio >= 1.0) {
    std::ostringstream os;
    os << "unbounded divergence: gamma=" << gamma << " >= alpha/2=" << 0.5 * alpha;
    throw UnboundedDivergenceError(os.str());
  }
  return 2.0 * std::atanh(ratio);
}

double disparate_treatment(const AuditDataset& data, const WeightVector& weights,
                           const Eigen::VectorXi& subgroup, int s, int positive_outcome) {
  if (!is_sign(s)) throw Error("sensitive value must be +1 or -1");
  if (!is_sign(positive_outcome)) throw Error("positive outcome must be +1 or -1");
  if (subgroup.size() != data.size()) throw Error("subgroup indicator length mismatch");
  if (weights.size() != data.size()) throw Error("weight vector length mismatch");
  weights.validate();

  // Accumulate the four cells (S=s / S!=s) x (Y=pos / total) inside G.
  double w_s = 0.0, w_s_pos = 0.0, w_o = 0.0, w_o_pos = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    if (subgroup[i] != +1) continue;
    const double w = weights.u[i];
    const bool pos = data.outcome()[i] == positive_outcome;
    if (data.sensitive()[i] == s) {
      w_s += w;
      if (pos) w_s_pos += w;
    } else {
      w_o += w;
      if (pos) w_o_pos += w;
    }
  }
  if (w_s <= 0.0) {
    throw DegenerateSubgroupError("disparate treatment undefined: no weight in cell " +
                                  cell_name(s, positive_outcome));
  }
  if (w_o <= 0.0) {
    throw DegenerateSubgroupError("disparate treatment undefined: no weight in cell " +
                                  cell_name(-s, positive_outcome));
  }
  const double p_s = w_s_pos / w_s;
  const double p_o = w_o_pos / w_o;
  if (p_o <= 0.0) {
    throw DegenerateSubgroupError(
        "disparate treatment undefined: zero positive rate in cell " + cell_name(-s, positive_outcome));
  }
  return p_s / p_o;
}

namespace {

GroupStats column_stats(const Eigen::VectorXd& values, const Eigen::VectorXd& w,
                        const std::vector<int>& rows) {
  GroupStats st;
  for (int i : rows) st.weight += w[i];
  if (st.weight <= 0.0) return st;
  double acc = 0.0;
  for (int i : rows) acc += w[i] * values[i];
  st.mean = acc / st.weight;
  double var = 0.0;
  for (int i : rows) {
    const double d = values[i] - st.mean;
    var += w[i] * d * d;
  }
  st.stddev = std::sqrt(var / st.weight);
  return st;
}

ProfileScope scope_profile(const AuditDataset& data, const Eigen::VectorXd& w,
                           const std::vector<int>& rows) {
  std::vector<int> rows_plus, rows_minus;
  for (int i : rows) {
    (data.sensitive()[i] > 0 ? rows_plus : rows_minus).push_back(i);
  }
  ProfileScope scope;
  const int d = data.dim();
  scope.rows.reserve(static_cast<std::size_t>(d) + 1);
  for (int j = 0; j < d; ++j) {
    ProfileEntry e;
    e.name = data.feature_names()[static_cast<std::size_t>(j)];
    const Eigen::VectorXd col = data.features().col(j);
    e.s_plus = column_stats(col, w, rows_plus);
    e.s_minus = column_stats(col, w, rows_minus);
    scope.rows.push_back(std::move(e));
  }
  ProfileEntry out;
  out.name = "outcome";
  Eigen::VectorXd rate(data.size());
  for (int i = 0; i < data.size(); ++i) rate[i] = data.outcome()[i] > 0 ? 1.0 : 0.0;
  out.s_plus = column_stats(rate, w, rows_plus);
  out.s_minus = column_stats(rate, w, rows_minus);
  scope.rows.push_back(std::move(out));
  return scope;
}

}  // namespace

ProfileTable subgroup_profile(const AuditDataset& data, const Eigen::VectorXi& subgroup,
                              const WeightVector* weights) {
  if (subgroup.size() != data.size()) throw Error("subgroup indicator length mismatch");
  Eigen::VectorXd w;
  if (weights != nullptr) {
    if (weights->size() != data.size()) throw Error("weight vector length mismatch");
    weights->validate();
    w = weights->u;
  } else {
    w = Eigen::VectorXd::Ones(data.size());
  }

  std::vector<int> all, inside, outside;
  all.reserve(static_cast<std::size_t>(data.size()));
  double w_total = 0.0, w_inside = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    all.push_back(i);
    w_total += w[i];
    if (subgroup[i] == +1) {
      inside.push_back(i);
      w_inside += w[i];
    } else {
      outside.push_back(i);
    }
  }

  ProfileTable table;
  table.population = scope_profile(data, w, all);
  table.inside = scope_profile(data, w, inside);
  table.outside = scope_profile(data, w, outside);
  table.subgroup_fraction = w_total > 0.0 ? w_inside / w_total : 0.0;
  return table;
}

}  // namespace mdfa
