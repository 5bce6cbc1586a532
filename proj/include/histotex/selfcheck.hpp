#ifndef HISTOTEX_SELFCHECK_HPP_
#define HISTOTEX_SELFCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace histotex {

struct CheckResult {
  std::string name;
  double max_error = 0;
  double tolerance = 0;
  bool passed = false;
  int cases = 0;
};

struct SelfcheckOptions {
  int gradient_inputs = 20;
  int histogram_pairs = 50;
  std::uint64_t seed = 1;
  /// Term whose analytic gradient is sign-flipped ("gram", "histogram",
  /// "content", "mean_activation", "tv"); empty for none. Test hook.
  std::string inject_fault;
};

/// Analytic image gradients of each loss, composed through a seeded 2-block
/// filter bank, against central differences on random 3x8x8 inputs.
std::vector<CheckResult> gradient_checks(const SelfcheckOptions& options);

/// histogram_match against a brute-force CDF inversion on random inputs
/// (n = 4096, 256 bins): bin placement, per-bin counts, order, self-match.
std::vector<CheckResult> histogram_checks(const SelfcheckOptions& options);

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options);

nlohmann::json to_json(const std::vector<CheckResult>& results);

}  // namespace histotex

#endif  // HISTOTEX_SELFCHECK_HPP_
