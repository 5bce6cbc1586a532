#ifndef HISTOTEX_GRAM_ANALYSIS_HPP_
#define HISTOTEX_GRAM_ANALYSIS_HPP_

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include "histotex/errors.hpp"

// Equal Gram matrices do not pin down feature means or variances: the
// normalized Gram matrix estimates E[X X^T] = Sigma + mu mu^T, so any change
// of variance can be absorbed by a matching change of mean. This header
// builds such distribution pairs in closed form (one feature) and by solving
// for an affine map X2 = A X1 + b (m features).

namespace histotex {

template <typename Scalar>
struct FeatureDistribution {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> covariance;

  Eigen::Index dimension() const { return mean.size(); }

  void validate() const {
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
      throw ShapeError("feature distribution: covariance must be m x m for an m-vector mean");
  }
};

/// Affine map A x + b; residual is the squared norm of the constraint residual.
template <typename Scalar>
struct AffineSolution {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> transform;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> offset;
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  int restart = -1;
  int iterations = 0;
};

/// E[X X^T] = Sigma + mu mu^T.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> noncentral_second_moment(const FeatureDistribution<Scalar>& d) {
  d.validate();
  return d.covariance + d.mean * d.mean.transpose();
}

/// Mean of a one-feature distribution with standard deviation sigma2 and the
/// same second moment as (mu1, sigma1): sqrt(sigma1^2 + mu1^2 - sigma2^2).
template <typename Scalar>
Scalar matched_mean_for_target_variance(Scalar mu1, Scalar sigma1, Scalar sigma2) {
  const Scalar radicand = sigma1 * sigma1 + mu1 * mu1 - sigma2 * sigma2;
  if (radicand < Scalar(0))
    throw InfeasibleTarget("target standard deviation exceeds the available second moment (radicand " +
                           std::to_string(static_cast<double>(radicand)) + ")");
  return std::sqrt(radicand);
}

template <typename Scalar>
struct GramComparison {
  bool equal = false;
  Scalar max_deviation = 0;
};

template <typename Scalar>
GramComparison<Scalar> verify_equal_gram(const FeatureDistribution<Scalar>& a, const FeatureDistribution<Scalar>& b,
                                         Scalar tolerance) {
  if (a.dimension() != b.dimension()) throw ShapeError("verify_equal_gram: dimension mismatch");
  const Scalar dev = (noncentral_second_moment(a) - noncentral_second_moment(b)).cwiseAbs().maxCoeff();
  return {dev <= tolerance, dev};
}

/// Distribution of A X + b.
template <typename Scalar>
FeatureDistribution<Scalar> apply_affine(const FeatureDistribution<Scalar>& d, const AffineSolution<Scalar>& s) {
  return {s.transform * d.mean + s.offset, s.transform * d.covariance * s.transform.transpose()};
}

/// Proves that no affine map reaches the target variances with an unchanged
/// Gram matrix. Such a map needs c = A mu + b with c_i^2 = T_ii - t_i
/// (T = Sigma + mu mu^T) and P = A Sigma A^T = T - c c^T positive
/// semi-definite. When T is positive definite the second condition is
/// c^T T^-1 c <= 1 for some choice of signs of c; up to `exhaustive_limit`
/// features every sign pattern is tried, beyond that only the 2 x 2 principal
/// minors of P are checked. Returns true when the instance is provably
/// infeasible.
template <typename Scalar>
bool certify_infeasible(const FeatureDistribution<Scalar>& d, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& targets,
                        int exhaustive_limit = 20) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const auto T = noncentral_second_moment(d);
  const Eigen::Index m = d.dimension();
  const Scalar slack = Scalar(1e-10);
  Vec c(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Scalar c2 = T(i, i) - targets[i];
    if (c2 < -slack) return true;
    c[i] = std::sqrt(std::max(c2, Scalar(0)));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const Scalar bound = std::sqrt(targets[i] * targets[j]) + slack * (Scalar(1) + std::abs(T(i, j)));
      const Scalar cc = c[i] * c[j];
      if (std::abs(T(i, j) - cc) > bound && std::abs(T(i, j) + cc) > bound) return true;
    }
  }
  if (m > exhaustive_limit) return false;
  Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt(T);
  if (llt.info() != Eigen::Success) return false;
  // Flipping every sign leaves c^T T^-1 c unchanged, so fix the first one.
  const std::uint64_t patterns = std::uint64_t{1} << (m - 1);
  for (std::uint64_t s = 0; s < patterns; ++s) {
    Vec signed_c = c;
    for (Eigen::Index i = 1; i < m; ++i)
      if ((s >> (i - 1)) & 1U) signed_c[i] = -signed_c[i];
    if (signed_c.dot(llt.solve(signed_c)) <= Scalar(1) + slack) return false;
  }
  return true;
}

struct AffineSolverOptions {
  int restarts = 20;
  int max_iterations = 500;
  double residual_tolerance = 1e-10;
  double step_tolerance = 1e-14;
  /// A start is abandoned after this many consecutive accepted steps that
  /// each lower the cost by less than `stall_ratio` (relative).
  int stall_steps = 8;
  double stall_ratio = 1e-9;
};

namespace detail {

template <typename Scalar>
class GramPreservingProblem {
 public:
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  GramPreservingProblem(const FeatureDistribution<Scalar>& d, const Vec& targets)
      : m_(d.dimension()), mu_(d.mean), sigma_(d.covariance), moment_(noncentral_second_moment(d)), targets_(targets) {}

  Eigen::Index unknowns() const { return m_ * m_ + m_; }
  Eigen::Index residual_count() const { return m_ * (m_ + 1) / 2 + m_; }

  // Parameters: A row-major, then b.
  Mat transform(const Vec& x) const {
    Mat A(m_, m_);
    for (Eigen::Index i = 0; i < m_; ++i)
      for (Eigen::Index j = 0; j < m_; ++j) A(i, j) = x[i * m_ + j];
    return A;
  }
  Vec offset(const Vec& x) const { return x.tail(m_); }

  Vec residuals(const Vec& x) const {
    const Mat A = transform(x);
    const Mat spread = A * sigma_ * A.transpose();
    const Vec c = A * mu_ + offset(x);
    Vec r(residual_count());
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < m_; ++i)
      for (Eigen::Index j = i; j < m_; ++j) r[row++] = spread(i, j) + c[i] * c[j] - moment_(i, j);
    for (Eigen::Index i = 0; i < m_; ++i) r[row++] = spread(i, i) - targets_[i];
    return r;
  }

  Mat jacobian(const Vec& x) const {
    const Mat A = transform(x);
    const Mat a_sigma = A * sigma_;
    const Vec c = A * mu_ + offset(x);
    Mat J = Mat::Zero(residual_count(), unknowns());
    const Eigen::Index b0 = m_ * m_;
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < m_; ++i) {
      for (Eigen::Index j = i; j < m_; ++j, ++row) {
        for (Eigen::Index q = 0; q < m_; ++q) {
          J(row, i * m_ + q) += a_sigma(j, q) + mu_[q] * c[j];
          J(row, j * m_ + q) += a_sigma(i, q) + mu_[q] * c[i];
        }
        J(row, b0 + i) += c[j];
        J(row, b0 + j) += c[i];
      }
    }
    for (Eigen::Index i = 0; i < m_; ++i, ++row)
      for (Eigen::Index q = 0; q < m_; ++q) J(row, i * m_ + q) = 2 * a_sigma(i, q);
    return J;
  }

  /// Diagonal scaling that meets the variance targets exactly when Sigma_ii > 0.
  Vec scaled_start() const {
    Vec x = Vec::Zero(unknowns());
    for (Eigen::Index i = 0; i < m_; ++i)
      x[i * m_ + i] = sigma_(i, i) > 0 ? std::sqrt(targets_[i] / sigma_(i, i)) : Scalar(1);
    return x;
  }

  Eigen::Index dimension() const { return m_; }

 private:
  Eigen::Index m_;
  Vec mu_;
  Mat sigma_;
  Mat moment_;
  Vec targets_;
};

/// Levenberg-Marquardt from one start. Underdetermined systems (fewer
/// residuals than unknowns) solve the damped dual system (J J^T + lambda I).
template <typename Scalar>
AffineSolution<Scalar> levenberg_marquardt(const GramPreservingProblem<Scalar>& problem,
                                           Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x,
                                           const AffineSolverOptions& options) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Vec r = problem.residuals(x);
  Scalar cost = r.squaredNorm();
  Scalar lambda = -1;
  int it = 0;
  int stalled = 0;
  for (; it < options.max_iterations && cost >= Scalar(options.residual_tolerance); ++it) {
    const Mat J = problem.jacobian(x);
    const bool dual = J.rows() < J.cols();
    Mat normal = dual ? Mat(J * J.transpose()) : Mat(J.transpose() * J);
    if (lambda < 0) lambda = Scalar(1e-3) * std::max(Scalar(1), normal.diagonal().maxCoeff());
    const Vec rhs = dual ? Vec(-r) : Vec(-(J.transpose() * r));
    bool accepted = false;
    while (!accepted && it < options.max_iterations) {
      Mat damped = normal;
      damped.diagonal().array() += lambda;
      const Vec solved = damped.ldlt().solve(rhs);
      const Vec step = dual ? Vec(J.transpose() * solved) : solved;
      if (!step.allFinite() || step.norm() < Scalar(options.step_tolerance) * (Scalar(1) + x.norm())) {
        return {problem.transform(x), problem.offset(x), cost, -1, it};
      }
      const Vec candidate = x + step;
      const Vec r_new = problem.residuals(candidate);
      const Scalar cost_new = r_new.squaredNorm();
      if (cost_new < cost) {
        stalled = (cost - cost_new) < Scalar(options.stall_ratio) * cost ? stalled + 1 : 0;
        x = candidate;
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda / Scalar(3), std::numeric_limits<Scalar>::min());
        accepted = true;
        if (stalled >= options.stall_steps) return {problem.transform(x), problem.offset(x), cost, -1, it + 1};
      } else {
        lambda *= Scalar(4);
        ++it;
        if (lambda > Scalar(1e20)) return {problem.transform(x), problem.offset(x), cost, -1, it};
      }
    }
  }
  return {problem.transform(x), problem.offset(x), cost, -1, it};
}

}  // namespace detail

/// Searches for A, b with E[(A X + b)(A X + b)^T] = E[X X^T] and
/// diag(A Sigma A^T) = target variances, minimizing the squared residual of
/// those m(m+3)/2 equations over the m(m+1) unknowns. Start 0 scales each
/// feature to its target variance; later starts perturb it randomly. Returns
/// the best start; success is read off `residual`.
template <typename Scalar>
AffineSolution<Scalar> solve_affine_gram_preserving(const FeatureDistribution<Scalar>& d,
                                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& target_variances,
                                                    std::uint64_t seed, const AffineSolverOptions& options = {}) {
  d.validate();
  const Eigen::Index m = d.dimension();
  if (m < 1) throw ShapeError("solve_affine_gram_preserving: need at least one feature");
  if (target_variances.size() != m) throw ShapeError("solve_affine_gram_preserving: one target variance per feature");
  if ((target_variances.array() < Scalar(0)).any()) throw ConfigError("target variances must be non-negative");

  detail::GramPreservingProblem<Scalar> problem(d, target_variances);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Scalar jitter = Scalar(1) / std::sqrt(Scalar(m));

  AffineSolution<Scalar> best;
  for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> start = problem.scaled_start();
    if (restart > 0)
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += jitter * Scalar(normal(rng));
    auto candidate = detail::levenberg_marquardt(problem, start, options);
    candidate.restart = restart;
    if (candidate.residual < best.residual) best = std::move(candidate);
    if (best.residual < Scalar(options.residual_tolerance)) break;
  }
  return best;
}

}  // namespace histotex

#endif  // HISTOTEX_GRAM_ANALYSIS_HPP_
