#ifndef HISTOTEX_GRAM_EXPERIMENT_HPP_
#define HISTOTEX_GRAM_EXPERIMENT_HPP_

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "histotex/gram_analysis.hpp"

namespace histotex {

/// One random instance: mu, M and target variances ~ U(0, 1), Sigma = M M^T.
struct GramInstance {
  FeatureDistribution<double> distribution;
  Eigen::VectorXd target_variances;
};

GramInstance random_gram_instance(int m, std::uint64_t seed);

/// Seed of instance `index` of dimension m under a base seed.
std::uint64_t instance_seed(std::uint64_t base_seed, int m, int index);

struct GramInstanceRecord {
  int m = 0;
  std::uint64_t seed = 0;
  double residual = 0;
  double max_gram_deviation = 0;
  double max_variance_deviation = 0;
  double wall_time_seconds = 0;
  int restart = -1;
  int iterations = 0;
  bool certified_infeasible = false;
};

GramInstanceRecord run_gram_instance(int m, std::uint64_t seed, const AffineSolverOptions& options = {});

std::vector<GramInstanceRecord> run_gram_experiment(const std::vector<int>& dims, int instances,
                                                    std::uint64_t base_seed, const AffineSolverOptions& options = {});

/// Report document: solver settings, sampling scheme, one row per instance.
nlohmann::json gram_report(const std::vector<GramInstanceRecord>& records, std::uint64_t base_seed,
                           const AffineSolverOptions& options);

}  // namespace histotex

#endif  // HISTOTEX_GRAM_EXPERIMENT_HPP_
