#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mdfa/optim.hpp"
#include "mdfa/rng.hpp"

#include <cmath>
#include <vector>

using namespace mdfa;

namespace {

// Two mirrored points force intercept 0; the coefficient solves a 1-d problem
// we can brute-force.
struct MirrorProblem {
  Eigen::MatrixXd phi = (Eigen::MatrixXd(2, 1) << 1.0, -1.0).finished();
  Eigen::VectorXi z = (Eigen::VectorXi(2) << +1, -1).finished();
  Eigen::VectorXd w = Eigen::VectorXd::Ones(2);
};

double grid_minimizer(double lambda, LossKind loss) {
  auto f = [&](double w) {
    const double t = w;  // both points have margin z*(w*x) = w
    double l;
    if (loss == LossKind::Logistic) {
      l = t >= 0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
    } else {
      l = t >= 1 ? 0.0 : (t <= 0 ? 0.5 - t : 0.5 * (1 - t) * (1 - t));
    }
    return l + lambda * w * w;
  };
  double best = 0.0, best_f = f(0.0);
  for (int k = 0; k <= 30000; ++k) {
    const double w = k * 1e-4;
    const double v = f(w);
    if (v < best_f) {
      best_f = v;
      best = w;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("logistic fit matches a brute-force one-dimensional oracle") {
  MirrorProblem p;
  LinearFitOptions opts;
  opts.lambda = 0.1;
  auto fit = fit_linear_classifier(p.phi, p.z, p.w, opts);
  CHECK(fit.converged);
  CHECK(std::abs(fit.intercept) < 1e-6);
  CHECK(fit.coef[0] == doctest::Approx(grid_minimizer(0.1, LossKind::Logistic)).epsilon(1e-3));
}

TEST_CASE("smoothed hinge has a closed-form minimizer on the mirror problem") {
  MirrorProblem p;
  LinearFitOptions opts;
  opts.lambda = 0.1;
  opts.loss = LossKind::SmoothedHinge;
  auto fit = fit_linear_classifier(p.phi, p.z, p.w, opts);
  CHECK(fit.converged);
  // stationarity in (0,1): -(1-w) + 0.2 w = 0  =>  w = 5/6.
  CHECK(fit.coef[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-5));
  CHECK(std::abs(fit.intercept) < 1e-6);
}

TEST_CASE("objective trace is monotone non-increasing") {
  Rng rng(3);
  const int m = 120, d = 4;
  Eigen::MatrixXd phi(m, d);
  Eigen::VectorXi z(m);
  Eigen::VectorXd w(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < d; ++j) phi(i, j) = rng.normal();
    z[i] = phi.row(i).sum() + 0.5 * rng.normal() >= 0 ? +1 : -1;
    w[i] = rng.uniform(0.2, 2.0);
  }
  LinearFitOptions opts;
  opts.lambda = 0.05;
  std::vector<double> trace;
  auto fit = fit_linear_classifier(phi, z, w, opts, nullptr, &trace);
  CHECK(fit.converged);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-15);

  SUBCASE("weight rescaling changes nothing") {
    auto fit2 = fit_linear_classifier(phi, z, Eigen::VectorXd(7.5 * w), opts);
    CHECK((fit.coef - fit2.coef).norm() <= 1e-12);
    CHECK(std::abs(fit.intercept - fit2.intercept) <= 1e-12);
  }

  SUBCASE("warm start from the solution stops immediately") {
    auto fit2 = fit_linear_classifier(phi, z, w, opts, &fit);
    CHECK(fit2.converged);
    CHECK(fit2.iterations <= 1);
    CHECK((fit2.coef - fit.coef).norm() <= 1e-9);
  }
}

TEST_CASE("separable data without regularization stays finite") {
  Eigen::MatrixXd phi(4, 1);
  phi << -2, -1, 1, 2;
  Eigen::VectorXi z(4);
  z << -1, -1, +1, +1;
  LinearFitOptions opts;
  opts.lambda = 0.0;
  opts.max_iters = 300;
  auto fit = fit_linear_classifier(phi, z, Eigen::VectorXd::Ones(4), opts);
  CHECK(std::isfinite(fit.coef[0]));
  CHECK(fit.coef[0] > 0.0);
  // Moderate iteration budget cannot reach the (infinite) optimum.
  CHECK(!fit.converged);
  CHECK(fit.iterations == 300);
}

TEST_CASE("input validation") {
  MirrorProblem p;
  LinearFitOptions opts;
  Eigen::VectorXi bad_z(2);
  bad_z << 0, 1;
  CHECK_THROWS_AS(fit_linear_classifier(p.phi, bad_z, p.w, opts), Error);
  Eigen::VectorXd bad_w(2);
  bad_w << -1.0, 1.0;
  CHECK_THROWS_AS(fit_linear_classifier(p.phi, p.z, bad_w, opts), Error);
  CHECK_THROWS_AS(fit_linear_classifier(p.phi, p.z, Eigen::VectorXd::Zero(2), opts), Error);
  Eigen::MatrixXd bad_phi(2, 1);
  bad_phi << std::nan(""), 1.0;
  CHECK_THROWS_AS(fit_linear_classifier(bad_phi, p.z, p.w, opts), Error);
  LinearModelFit warm;
  warm.coef = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(fit_linear_classifier(p.phi, p.z, p.w, opts, &warm), Error);
}
