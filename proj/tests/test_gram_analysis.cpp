#include "doctest.h"

#include <cmath>
#include <random>

#include "histotex/gram_experiment.hpp"

using namespace histotex;

namespace {

Eigen::VectorXd scalar_target(double t) { return Eigen::VectorXd::Constant(1, t); }

FeatureDistribution<double> one_feature(double mu, double sigma) {
  FeatureDistribution<double> d;
  d.mean = scalar_target(mu);
  d.covariance = Eigen::MatrixXd::Constant(1, 1, sigma * sigma);
  return d;
}

// Instance with a known solution: X2 = A0 X1 + b0 where A0 Sigma A0^T = P,
// A0 mu + b0 = c and P + c c^T = Sigma + mu mu^T. Targets are diag(P).
struct FeasibleInstance {
  FeatureDistribution<double> d;
  Eigen::VectorXd targets;
};

FeasibleInstance feasible_instance(int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FeasibleInstance inst;
  Eigen::MatrixXd factor(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) factor(i, j) = unit(rng);
  inst.d.covariance = factor * factor.transpose() + 0.1 * Eigen::MatrixXd::Identity(m, m);
  inst.d.mean = Eigen::VectorXd::NullaryExpr(m, [&] { return unit(rng); });
  const Eigen::MatrixXd T = noncentral_second_moment(inst.d);
  Eigen::VectorXd c = Eigen::VectorXd::NullaryExpr(m, [&] { return unit(rng) - 0.5; });
  c *= std::sqrt(0.5 / c.dot(T.llt().solve(c)));  // c^T T^-1 c = 1/2 keeps P definite
  inst.targets = (T - c * c.transpose()).diagonal();
  return inst;
}

}  // namespace

TEST_CASE("noncentral_second_moment") {
  CHECK(std::abs(noncentral_second_moment(one_feature(1 / std::sqrt(2.0), 0))(0, 0) - 0.5) < 1e-15);

  FeatureDistribution<double> centered;
  centered.mean = Eigen::VectorXd::Zero(3);
  centered.covariance = Eigen::MatrixXd::Random(3, 3);
  centered.covariance = centered.covariance * centered.covariance.transpose();
  CHECK(noncentral_second_moment(centered) == centered.covariance);

  FeatureDistribution<double> bad;
  bad.mean = Eigen::VectorXd::Zero(2);
  bad.covariance = Eigen::MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(noncentral_second_moment(bad), ShapeError);
}

TEST_CASE("noncentral_second_moment: Monte Carlo Gram estimate converges") {
  const int m = 3, n = 100000;
  const auto inst = random_gram_instance(m, 17);
  const Eigen::MatrixXd L = inst.distribution.covariance.llt().matrixL();
  std::mt19937_64 rng(18);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd F(m, n);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd z(m);
    for (int i = 0; i < m; ++i) z[i] = normal(rng);
    F.col(k) = inst.distribution.mean + L * z;
  }
  const Eigen::MatrixXd estimate = (F * F.transpose()) / double(n);
  const Eigen::MatrixXd exact = noncentral_second_moment(inst.distribution);
  // Entry scale times 3 / sqrt(n).
  CHECK((estimate - exact).cwiseAbs().maxCoeff() <= 3 / std::sqrt(double(n)) * exact.cwiseAbs().maxCoeff());
}

TEST_CASE("matched_mean_for_target_variance") {
  // The double nearest 1/sqrt2 squares to 0.5 + 6.8e-17, so the double
  // result is 0.5 to within one ulp; extended precision rounds back to 0.5.
  const double in_double = matched_mean_for_target_variance(1 / std::sqrt(2.0), 0.0, 0.5);
  CHECK(std::abs(in_double - 0.5) <= std::nextafter(0.5, 1.0) - 0.5);
  const long double extended = matched_mean_for_target_variance<long double>(1 / std::sqrt(2.0L), 0.0L, 0.5L);
  CHECK(static_cast<double>(extended) == 0.5);
  CHECK(matched_mean_for_target_variance(-0.8, 0.3, 0.3) == 0.8);
  CHECK_THROWS_AS(matched_mean_for_target_variance(0.0, 0.0, 1.0), InfeasibleTarget);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double mu1 = unit(rng), s1 = unit(rng);
    const double s2 = unit(rng) * std::hypot(mu1, s1);
    const double mu2 = matched_mean_for_target_variance(mu1, s1, s2);
    CHECK(std::abs(s2 * s2 + mu2 * mu2 - (s1 * s1 + mu1 * mu1)) <= 1e-12);
  }
}

TEST_CASE("verify_equal_gram") {
  const auto d = one_feature(0.4, 0.9);
  const auto self = verify_equal_gram(d, d, 0.0);
  CHECK(self.equal);
  CHECK(self.max_deviation == 0.0);

  const auto pair = verify_equal_gram(one_feature(1 / std::sqrt(2.0), 0), one_feature(0.5, 0.5), 1e-12);
  CHECK(pair.equal);

  const double tol = 1e-6;
  auto moved = d;
  moved.covariance(0, 0) += 2 * tol;
  CHECK_FALSE(verify_equal_gram(d, moved, tol).equal);

  FeatureDistribution<double> two;
  two.mean = Eigen::VectorXd::Zero(2);
  two.covariance = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(verify_equal_gram(d, two, 1.0), ShapeError);
}

TEST_CASE("solver: identity targets are met by the identity map") {
  const auto inst = random_gram_instance(4, 5);
  const auto s = solve_affine_gram_preserving(inst.distribution, Eigen::VectorXd(inst.distribution.covariance.diagonal()), 1);
  CHECK(s.residual < 1e-10);
  const auto out = apply_affine(inst.distribution, s);
  CHECK(verify_equal_gram(inst.distribution, out, 1e-5).equal);
}

TEST_CASE("solver: one feature reproduces the closed-form mean") {
  // Sigma must be positive for any affine map to produce variance 1/4; as
  // Sigma -> 0 the implied mean tends to the closed form 1/2.
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const auto d = one_feature(1 / std::sqrt(2.0), std::sqrt(eps));
    const auto s = solve_affine_gram_preserving(d, scalar_target(0.25), 7);
    CHECK(s.residual < 1e-10);
    const double implied = (s.transform * d.mean + s.offset)[0];
    const double closed = matched_mean_for_target_variance(1 / std::sqrt(2.0), std::sqrt(eps), 0.5);
    CHECK(std::abs(implied * implied - closed * closed) <= 10 * std::sqrt(s.residual));
  }
  // Sigma = 0 exactly: output variance is always 0, so the variance equation
  // keeps a residual of (1/4)^2 and the mean lands on sqrt(1/2).
  const auto degenerate = one_feature(1 / std::sqrt(2.0), 0);
  const auto s = solve_affine_gram_preserving(degenerate, scalar_target(0.25), 7);
  CHECK(std::abs(s.residual - 0.0625) < 1e-10);
  CHECK(certify_infeasible(degenerate, scalar_target(0.25)) == false);
}

TEST_CASE("solver: instances feasible by construction are solved") {
  for (int m : {2, 4, 8, 16}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto inst = feasible_instance(m, 100 * m + seed);
      CHECK_FALSE(certify_infeasible(inst.d, inst.targets));
      const auto s = solve_affine_gram_preserving(inst.d, inst.targets, seed);
      CHECK(s.residual < 1e-6);
      const auto out = apply_affine(inst.d, s);
      const double tol = 10 * std::sqrt(s.residual) + 1e-12;
      CHECK(verify_equal_gram(inst.d, out, tol).equal);
      CHECK((out.covariance.diagonal() - inst.targets).cwiseAbs().maxCoeff() <= tol);
    }
  }
}

TEST_CASE("solver: deterministic given the seed, input validation") {
  const auto inst = random_gram_instance(3, 9);
  const auto a = solve_affine_gram_preserving(inst.distribution, inst.target_variances, 11);
  const auto b = solve_affine_gram_preserving(inst.distribution, inst.target_variances, 11);
  CHECK(a.transform == b.transform);
  CHECK(a.offset == b.offset);
  CHECK(a.residual == b.residual);
  CHECK(a.residual >= 0);
  CHECK_THROWS_AS(solve_affine_gram_preserving(inst.distribution, Eigen::VectorXd(Eigen::VectorXd::Zero(2)), 1), ShapeError);
  CHECK_THROWS_AS(solve_affine_gram_preserving(inst.distribution, Eigen::VectorXd(Eigen::VectorXd::Constant(3, -1.0)), 1), ConfigError);
}

TEST_CASE("certify_infeasible") {
  // Variance target above the second moment: c^2 < 0.
  CHECK(certify_infeasible(one_feature(0.3, 0.4), scalar_target(0.5)));
  CHECK_FALSE(certify_infeasible(one_feature(0.3, 0.4), scalar_target(0.2)));

  // Certified instances really leave a residual.
  int certified = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto inst = random_gram_instance(2, seed);
    if (!certify_infeasible(inst.distribution, inst.target_variances)) continue;
    ++certified;
    CHECK(solve_affine_gram_preserving(inst.distribution, inst.target_variances, seed).residual > 1e-8);
  }
  CHECK(certified > 0);
}

TEST_CASE("random instances and the report document") {
  const auto a = random_gram_instance(5, 1), b = random_gram_instance(5, 1);
  CHECK(a.distribution.mean == b.distribution.mean);
  CHECK(a.distribution.covariance == b.distribution.covariance);
  CHECK(a.distribution.covariance == a.distribution.covariance.transpose());
  CHECK((a.target_variances.array() >= 0).all());
  CHECK((a.target_variances.array() < 1).all());
  CHECK(instance_seed(1, 2, 3) != instance_seed(1, 2, 4));
  CHECK(instance_seed(1, 2, 3) == instance_seed(1, 2, 3));
  CHECK_THROWS_AS(random_gram_instance(0, 1), ConfigError);

  const auto records = run_gram_experiment({1, 2}, 3, 7);
  REQUIRE(records.size() == 6);
  CHECK(records[0].m == 1);
  CHECK(records[5].m == 2);
  CHECK(records[4].seed == instance_seed(7, 2, 1));
  const auto report = gram_report(records, 7, {});
  CHECK(report["instances"].size() == 6);
  CHECK(report["solver"]["restarts"] == 20);
  for (const char* key : {"m", "seed", "residual", "max_gram_deviation", "wall_time_s"})
    CHECK(report["instances"][0].contains(key));
}
