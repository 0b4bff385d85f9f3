#include "mdfa/kernels.hpp"

#include "mdfa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mdfa {

FeatureMap FeatureMap::identity(int input_dim) {
  if (input_dim <= 0) throw Error("feature map input dimension must be positive");
  FeatureMap m;
  m.kind_ = FeatureMapKind::Identity;
  m.input_dim_ = input_dim;
  m.output_dim_ = input_dim;
  return m;
}

FeatureMap FeatureMap::standardized(const AuditDataset& reference) {
  if (reference.size() == 0) throw Error("cannot standardize against an empty dataset");
  FeatureMap m;
  m.kind_ = FeatureMapKind::Standardized;
  m.input_dim_ = reference.dim();
  m.output_dim_ = reference.dim();
  m.shift_ = reference.features().colwise().mean();
  Eigen::VectorXd var =
      (reference.features().rowwise() - m.shift_.transpose()).array().square().colwise().mean();
  m.scale_ = var.array().sqrt();
  for (Eigen::Index j = 0; j < m.scale_.size(); ++j) {
    if (m.scale_[j] <= 0.0) m.scale_[j] = 1.0;
  }
  return m;
}

FeatureMap FeatureMap::random_fourier(int input_dim, int dim, double bandwidth,
                                      std::uint64_t seed) {
  if (input_dim <= 0) throw Error("feature map input dimension must be positive");
  if (dim <= 0 || dim % 2 != 0) throw Error("random-feature dimension must be positive and even");
  if (!(bandwidth > 0.0)) throw Error("kernel bandwidth must be positive");
  FeatureMap m;
  m.kind_ = FeatureMapKind::RandomFourier;
  m.input_dim_ = input_dim;
  m.output_dim_ = dim;
  m.bandwidth_ = bandwidth;
  m.frequencies_.resize(dim / 2, input_dim);
  Rng rng(seed);
  for (Eigen::Index j = 0; j < m.frequencies_.rows(); ++j) {
    for (Eigen::Index k = 0; k < m.frequencies_.cols(); ++k) {
      m.frequencies_(j, k) = rng.normal() / bandwidth;
    }
  }
  return m;
}

double FeatureMap::bandwidth() const {
  if (kind_ != FeatureMapKind::RandomFourier) {
    throw Error("bandwidth is defined only for random-feature maps");
  }
  return bandwidth_;
}

Eigen::VectorXd FeatureMap::operator()(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim_) throw Error("feature map applied to a point of the wrong dimension");
  switch (kind_) {
    case FeatureMapKind::Identity:
      return x;
    case FeatureMapKind::Standardized:
      return (x - shift_).cwiseQuotient(scale_);
    case FeatureMapKind::RandomFourier: {
      const Eigen::VectorXd a = frequencies_ * x;
      Eigen::VectorXd out(output_dim_);
      const double norm = std::sqrt(2.0 / output_dim_);
      out.head(output_dim_ / 2) = norm * a.array().cos();
      out.tail(output_dim_ / 2) = norm * a.array().sin();
      return out;
    }
  }
  throw Error("unreachable feature map kind");
}

Eigen::MatrixXd FeatureMap::apply(const Eigen::MatrixXd& X) const {
  if (X.cols() != input_dim_) throw Error("feature map applied to rows of the wrong dimension");
  switch (kind_) {
    case FeatureMapKind::Identity:
      return X;
    case FeatureMapKind::Standardized:
      return (X.rowwise() - shift_.transpose()).array().rowwise() / scale_.transpose().array();
    case FeatureMapKind::RandomFourier: {
      const Eigen::MatrixXd a = X * frequencies_.transpose();
      Eigen::MatrixXd out(X.rows(), output_dim_);
      const double norm = std::sqrt(2.0 / output_dim_);
      out.leftCols(output_dim_ / 2) = norm * a.array().cos();
      out.rightCols(output_dim_ / 2) = norm * a.array().sin();
      return out;
    }
  }
  throw Error("unreachable feature map kind");
}

double median_heuristic_bandwidth(const AuditDataset& train, std::uint64_t seed, int max_pairs) {
  const int m = train.size();
  if (m < 2) throw Error("median heuristic needs at least two points");
  if (max_pairs < 1) throw Error("max_pairs must be positive");

  std::vector<double> dist;
  const long long all_pairs = static_cast<long long>(m) * (m - 1) / 2;
  if (all_pairs <= max_pairs) {
    dist.reserve(static_cast<std::size_t>(all_pairs));
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        dist.push_back((train.features().row(i) - train.features().row(j)).norm());
      }
    }
  } else {
    dist.reserve(static_cast<std::size_t>(max_pairs));
    Rng rng(seed);
    for (int k = 0; k < max_pairs; ++k) {
      const auto i = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
      auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(m - 1)));
      if (j >= i) ++j;  // distinct pair without rejection
      dist.push_back((train.features().row(i) - train.features().row(j)).norm());
    }
  }

  std::sort(dist.begin(), dist.end());
  const std::size_t n = dist.size();
  const double median =
      n % 2 == 1 ? dist[n / 2] : 0.5 * (dist[n / 2 - 1] + dist[n / 2]);
  return median > 0.0 ? median : 1.0;
}

double resolve_bandwidth(const BandwidthSpec& spec, const AuditDataset& train,
                         std::uint64_t seed) {
  if (!(spec.value > 0.0)) throw Error("kernel bandwidth must be positive");
  if (!spec.median_relative) return spec.value;
  return spec.value * median_heuristic_bandwidth(train, seed);
}

double mmd_hat(const AuditDataset& data, const WeightVector& weights, int s,
               const FeatureMap& map) {
  if (s != +1 && s != -1) throw Error("sensitive value must be +1 or -1");
  if (weights.size() != data.size()) throw Error("weight vector length mismatch");
  weights.validate();

  const Eigen::MatrixXd phi = map.apply(data.features());
  Eigen::VectorXd mean_s = Eigen::VectorXd::Zero(map.output_dim());
  Eigen::VectorXd mean_o = Eigen::VectorXd::Zero(map.output_dim());
  double w_s = 0.0, w_o = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    const double w = weights.u[i];
    if (data.sensitive()[i] == s) {
      mean_s += w * phi.row(i).transpose();
      w_s += w;
    } else {
      mean_o += w * phi.row(i).transpose();
      w_o += w;
    }
  }
  if (w_s <= 0.0 || w_o <= 0.0) {
    throw DegenerateSubgroupError("mmd undefined: one sensitive group carries no weight");
  }
  return (mean_s / w_s - mean_o / w_o).norm();
}

}  // namespace mdfa
