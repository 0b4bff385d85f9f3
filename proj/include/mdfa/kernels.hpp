#pragma once

#include "mdfa/core.hpp"

#include <cstdint>

namespace mdfa {

enum class FeatureMapKind { Identity, Standardized, RandomFourier };

// Deterministic feature map phi : R^d -> R^D shared by the weight solvers and
// the certifier so both operate in the same function class.
class FeatureMap {
 public:
  // Zero-dimensional placeholder; any real use requires one of the factories.
  FeatureMap() = default;

  // phi(x) = x.
  static FeatureMap identity(int input_dim);
  // phi(x) = (x - mean) / std, moments taken from the reference split.
  // Zero-variance columns pass through unscaled.
  static FeatureMap standardized(const AuditDataset& reference);
  // Gaussian-kernel random features: dim/2 frequencies w_j ~ N(0, I/bw^2),
  // phi(x) = sqrt(2/dim) [cos(w_j.x) | sin(w_j.x)]_j, so phi.phi == 1 exactly
  // and phi(x).phi(x') estimates exp(-|x-x'|^2 / (2 bw^2)). dim must be even.
  static FeatureMap random_fourier(int input_dim, int dim, double bandwidth,
                                   std::uint64_t seed);

  FeatureMapKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  double bandwidth() const;  // RandomFourier only

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
  // Row-wise application: (m x d) -> (m x D).
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;

 private:
  FeatureMapKind kind_ = FeatureMapKind::Identity;
  int input_dim_ = 0;
  int output_dim_ = 0;
  double bandwidth_ = 0.0;
  Eigen::MatrixXd frequencies_;  // (D/2) x d
  Eigen::VectorXd shift_, scale_;
};

// Median Euclidean distance between pairs of training points. All pairs when
// there are at most max_pairs of them, otherwise max_pairs seeded random
// pairs. Falls back to 1.0 when the median vanishes (duplicate-only data).
double median_heuristic_bandwidth(const AuditDataset& train, std::uint64_t seed,
                                  int max_pairs = 1000);

// | mean_phi(group s) - mean_phi(complement) | with each group's weights
// normalized to unit mass, so per-group weight scaling cancels.
double mmd_hat(const AuditDataset& data, const WeightVector& weights, int s,
               const FeatureMap& map);

// Absolute bandwidth from a spec: either its literal value or the seeded
// median heuristic on the train split scaled by the spec's factor.
double resolve_bandwidth(const BandwidthSpec& spec, const AuditDataset& train,
                         std::uint64_t seed);

}  // namespace mdfa
