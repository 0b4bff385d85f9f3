#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mdfa/data.hpp"
#include "mdfa/kernels.hpp"
#include "mdfa/rng.hpp"

#include <cmath>

using namespace mdfa;

namespace {

AuditDataset points(const Eigen::MatrixXd& f) {
  Eigen::VectorXi s(f.rows()), y(f.rows());
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    s[i] = i % 2 == 0 ? +1 : -1;
    y[i] = +1;
  }
  return AuditDataset(f, s, y, {});
}

}  // namespace

TEST_CASE("identity and standardized maps") {
  auto id = FeatureMap::identity(3);
  Eigen::VectorXd x(3);
  x << 1, -2, 0.5;
  CHECK(id(x) == x);
  CHECK(id.output_dim() == 3);
  CHECK_THROWS_AS(id.bandwidth(), Error);

  Eigen::MatrixXd f(4, 2);
  f << 1, 5, 2, 5, 3, 5, 4, 5;  // second column is constant
  auto ref = points(f);
  auto std_map = FeatureMap::standardized(ref);
  Eigen::MatrixXd phi = std_map.apply(f);
  CHECK(std::abs(phi.col(0).mean()) < 1e-12);
  const double var = phi.col(0).array().square().mean();
  CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
  // Constant column passes through centered but unscaled.
  CHECK(phi.col(1).isZero(1e-12));
  CHECK(std_map(f.row(2).transpose())[0] == doctest::Approx(phi(2, 0)).epsilon(1e-12));
}

TEST_CASE("random features have unit self-inner-product") {
  auto map = FeatureMap::random_fourier(2, 64, 1.5, 42);
  Rng rng(7);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd x(2);
    x << rng.normal(), rng.normal() * 3.0;
    const Eigen::VectorXd phi = map(x);
    CHECK(std::abs(phi.squaredNorm() - 1.0) <= 1e-9);
  }
}

TEST_CASE("random features approximate the Gaussian kernel") {
  const double bw = 1.0;
  auto map = FeatureMap::random_fourier(2, 4096, bw, 3);
  Rng rng(17);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd a(2), b(2);
    a << rng.normal(), rng.normal();
    b << rng.normal(), rng.normal();
    const double exact = std::exp(-(a - b).squaredNorm() / (2.0 * bw * bw));
    const double approx = map(a).dot(map(b));
    worst = std::max(worst, std::abs(exact - approx));
  }
  CHECK(worst <= 0.05);
}

TEST_CASE("random feature maps are seeded and shape-checked") {
  auto m1 = FeatureMap::random_fourier(3, 32, 2.0, 5);
  auto m2 = FeatureMap::random_fourier(3, 32, 2.0, 5);
  auto m3 = FeatureMap::random_fourier(3, 32, 2.0, 6);
  Eigen::VectorXd x(3);
  x << 0.3, -1.2, 0.7;
  CHECK(m1(x) == m2(x));
  CHECK(m1(x) != m3(x));

  Eigen::MatrixXd X(2, 3);
  X << 0.3, -1.2, 0.7, 1.0, 0.0, -1.0;
  const Eigen::MatrixXd phi = m1.apply(X);
  CHECK(phi.row(0).transpose() == m1(X.row(0).transpose()));

  CHECK_THROWS_AS(FeatureMap::random_fourier(2, 33, 1.0, 0), Error);
  CHECK_THROWS_AS(FeatureMap::random_fourier(2, 0, 1.0, 0), Error);
  CHECK_THROWS_AS(FeatureMap::random_fourier(2, 32, 0.0, 0), Error);
  CHECK_THROWS_AS(m1(Eigen::VectorXd::Zero(2)), Error);
}

TEST_CASE("median heuristic: exact small cases") {
  Eigen::MatrixXd f(3, 1);
  f << 0, 3, 4;  // pairwise distances {3, 4, 1}
  CHECK(median_heuristic_bandwidth(points(f), 0) == doctest::Approx(3.0).epsilon(1e-14));

  Eigen::MatrixXd g(4, 1);
  g << 0, 1, 3, 6;  // distances {1,3,6,2,5,3} -> median 3
  CHECK(median_heuristic_bandwidth(points(g), 0) == doctest::Approx(3.0).epsilon(1e-14));

  Eigen::MatrixXd dup = Eigen::MatrixXd::Zero(5, 2);
  CHECK(median_heuristic_bandwidth(points(dup), 0) == 1.0);  // degenerate fallback

  Eigen::MatrixXd one(1, 1);
  one << 0;
  Eigen::VectorXi sv(1), yv(1);
  sv << 1;
  yv << 1;
  CHECK_THROWS_AS(median_heuristic_bandwidth(AuditDataset(one, sv, yv, {}), 0), Error);
}

TEST_CASE("median heuristic: sampled path is deterministic and plausible") {
  SyntheticSpec spec;
  spec.m = 500;
  spec.mu = 0.0;
  spec.nu = 0.0;
  spec.seed = 21;
  auto [data, truth] = generate_synthetic(spec);

  const double bw1 = median_heuristic_bandwidth(data, 9);
  const double bw2 = median_heuristic_bandwidth(data, 9);
  CHECK(bw1 == bw2);
  // |x - x'| for independent 2-d standard normals: median near 1.67.
  CHECK(bw1 > 1.3);
  CHECK(bw1 < 2.1);
}

TEST_CASE("weighted mmd: hand-computed case and group normalization") {
  Eigen::MatrixXd f(4, 1);
  f << 1, 0, 3, 2;  // s alternates: +1 rows {0,2}, -1 rows {1,3}
  auto data = points(f);
  auto id = FeatureMap::identity(1);

  WeightVector w(Eigen::Vector4d(1, 2, 3, 2));
  // mean_plus = (1*1 + 3*3)/4 = 2.5, mean_minus = (2*0 + 2*2)/4 = 1.
  CHECK(mmd_hat(data, w, +1, id) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(mmd_hat(data, w, -1, id) == doctest::Approx(1.5).epsilon(1e-14));

  // Scaling one group's weights leaves the statistic unchanged.
  WeightVector w2(w.u);
  w2.u[0] *= 10.0;
  w2.u[2] *= 10.0;
  CHECK(mmd_hat(data, w2, +1, id) == doctest::Approx(1.5).epsilon(1e-14));

  WeightVector dead(Eigen::Vector4d(0, 1, 0, 1));
  CHECK_THROWS_AS(mmd_hat(data, dead, +1, id), DegenerateSubgroupError);

  // Identical group distributions with equal weights: mmd is zero.
  Eigen::MatrixXd same(4, 1);
  same << 5, 5, -1, -1;
  Eigen::VectorXi s(4), y(4);
  s << +1, -1, +1, -1;
  y << +1, +1, +1, +1;
  AuditDataset mirrored(same, s, y, {});
  CHECK(mmd_hat(mirrored, WeightVector::ones(4), +1, id) ==
        doctest::Approx(0.0).epsilon(1e-14));
}
