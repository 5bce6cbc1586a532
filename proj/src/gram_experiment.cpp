#include "histotex/gram_experiment.hpp"

#include <chrono>
#include <random>

#include "histotex/parallel.hpp"

namespace histotex {

std::uint64_t instance_seed(std::uint64_t base_seed, int m, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(index)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

GramInstance random_gram_instance(int m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GramInstance inst;
  inst.distribution.mean.resize(m);
  for (int i = 0; i < m; ++i) inst.distribution.mean[i] = unit(rng);
  Eigen::MatrixXd factor(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) factor(i, j) = unit(rng);
  inst.distribution.covariance = factor * factor.transpose();
  inst.target_variances.resize(m);
  for (int i = 0; i < m; ++i) inst.target_variances[i] = unit(rng);
  return inst;
}

GramInstanceRecord run_gram_instance(int m, std::uint64_t seed, const AffineSolverOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const GramInstance inst = random_gram_instance(m, seed);
  const bool infeasible = certify_infeasible(inst.distribution, inst.target_variances);
  // Restarts cannot help a provably infeasible instance; one start still
  // reports its least-squares residual.
  AffineSolverOptions effective = options;
  if (infeasible) effective.restarts = 1;
  const auto solution = solve_affine_gram_preserving(inst.distribution, inst.target_variances, seed, effective);
  const auto out = apply_affine(inst.distribution, solution);

  GramInstanceRecord rec;
  rec.m = m;
  rec.seed = seed;
  rec.residual = solution.residual;
  rec.restart = solution.restart;
  rec.iterations = solution.iterations;
  rec.max_gram_deviation = verify_equal_gram(inst.distribution, out, 0.0).max_deviation;
  rec.max_variance_deviation = (out.covariance.diagonal() - inst.target_variances).cwiseAbs().maxCoeff();
  rec.certified_infeasible = infeasible;
  rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<GramInstanceRecord> run_gram_experiment(const std::vector<int>& dims, int instances,
                                                    std::uint64_t base_seed, const AffineSolverOptions& options) {
  std::vector<GramInstanceRecord> records(dims.size() * static_cast<std::size_t>(std::max(0, instances)));
  parallel_for(records.size(), [&](std::size_t k) {
    const int m = dims[k / instances];
    const int index = static_cast<int>(k % instances);
    records[k] = run_gram_instance(m, instance_seed(base_seed, m, index), options);
  });
  return records;
}

nlohmann::json gram_report(const std::vector<GramInstanceRecord>& records, std::uint64_t base_seed,
                           const AffineSolverOptions& options) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records) {
    rows.push_back({{"m", r.m},
                    {"seed", r.seed},
                    {"residual", r.residual},
                    {"max_gram_deviation", r.max_gram_deviation},
                    {"max_variance_deviation", r.max_variance_deviation},
                    {"wall_time_s", r.wall_time_seconds},
                    {"restart", r.restart},
                    {"iterations", r.iterations},
                    {"certified_infeasible", r.certified_infeasible}});
  }
  return {{"base_seed", base_seed},
          {"sampling", "mu, M, target variances ~ U(0,1); Sigma = M M^T"},
          {"solver",
           {{"method", "levenberg-marquardt"},
            {"restarts", options.restarts},
            {"max_iterations", options.max_iterations},
            {"residual_tolerance", options.residual_tolerance},
            {"step_tolerance", options.step_tolerance}}},
          {"instances", rows}};
}

}  // namespace histotex
