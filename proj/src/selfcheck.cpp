#include "histotex/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "histotex/network.hpp"
#include "histotex/statistics.hpp"

namespace histotex {

namespace {

constexpr double kGradientTolerance = 1e-4;
constexpr double kFiniteDifferenceStep = 1e-6;

struct GradientCase {
  std::string name;
  // Loss at x and its analytic image gradient at x0 for the chosen fixture.
  std::function<double(const Tensord&)> loss;
  std::function<Tensord(const Tensord&)> gradient;
};

std::vector<GradientCase> gradient_cases(const Network<double>& net, const Tensord& x0, const Tensord& source,
                                         const Tensord& content) {
  const TagSet tags{"relu1_1", "relu2_1"};
  const LayerWeights<double> weights{{"relu1_1", 0.7}, {"relu2_1", 1.3}};
  const auto s_acts = forward(source, net, tags);
  const auto c_acts = forward(content, net, tags);

  // Remap frozen at the base point.
  std::map<std::string, RowMatrix<double>> remapped;
  for (const auto& [tag, act] : forward(x0, net, tags))
    remapped[tag] = histogram_remap(act.features(), histogram_targets(s_acts.at(tag).features()));
  auto frozen = [=](const ActivationSet<double>& acts) {
    LossResult<double> r;
    for (const auto& [tag, w] : weights) {
      const auto& a = acts.at(tag);
      auto layer = histogram_layer_loss_frozen(a.features(), remapped.at(tag), w, double(a.size()));
      r.value += layer.value;
      r.grads.emplace(tag, Tensord(a.channels(), a.height(), a.width(), std::move(layer.grad)));
    }
    return r;
  };

  auto composed = [&](std::string name, std::function<LossResult<double>(const ActivationSet<double>&)> loss) {
    return GradientCase{
        std::move(name),
        [=, &net](const Tensord& x) { return loss(forward(x, net, tags)).value; },
        [=, &net](const Tensord& x) { return backward_to_image(x, net, loss(forward(x, net, tags)).grads); }};
  };

  std::vector<GradientCase> cases;
  cases.push_back(composed("gram", [=](const auto& acts) { return gram_loss(s_acts, acts, weights); }));
  cases.push_back(composed("histogram", frozen));
  cases.push_back(composed("content", [=](const auto& acts) { return content_loss(c_acts, acts, weights); }));
  cases.push_back(
      composed("mean_activation", [=](const auto& acts) { return mean_activation_loss(s_acts, acts, weights); }));
  cases.push_back(GradientCase{"tv", [](const Tensord& x) { return tv_loss(x, 0.5).first; },
                               [](const Tensord& x) { return tv_loss(x, 0.5).second; }});
  return cases;
}

// Bin of quantile q under counts: first b with cumulative count above q.
Index oracle_bin(const std::vector<double>& counts, double q) {
  double cumulative = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    cumulative += counts[b];
    if (cumulative > q) return Index(b);
  }
  return Index(counts.size()) - 1;
}

std::vector<std::size_t> stable_order(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return order;
}

std::vector<double> random_values(std::mt19937_64& rng, int pair, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-3.0, 5.0);
  std::vector<double> v(n);
  for (auto& x : v) x = pair % 2 == 0 ? normal(rng) : uniform(rng);
  // Every third pair is coarsely quantized so ties occur.
  if (pair % 3 == 0)
    for (auto& x : v) x = std::round(x * 16.0) / 16.0;
  return v;
}

Histogram<double> random_target(std::mt19937_64& rng, Index bins) {
  std::uniform_int_distribution<int> count(0, 40);
  std::bernoulli_distribution empty(0.2);
  std::uniform_real_distribution<double> range(-2.0, 2.0);
  Histogram<double> h;
  h.min = range(rng);
  h.max = h.min + 0.5 + std::abs(range(rng));
  h.counts.resize(std::size_t(bins));
  for (auto& c : h.counts) c = empty(rng) ? 0.0 : double(count(rng));
  h.counts[std::size_t(bins / 2)] += 1;
  h.total = std::accumulate(h.counts.begin(), h.counts.end(), 0.0);
  return h;
}

CheckResult make_result(std::string name, double max_error, double tolerance, int cases) {
  return {std::move(name), max_error, tolerance, max_error <= tolerance, cases};
}

}  // namespace

std::vector<CheckResult> gradient_checks(const SelfcheckOptions& options) {
  const auto net = random_filter_bank<double>(options.seed, {3, 6, 8});
  std::map<std::string, double> worst;
  std::vector<std::string> order;
  for (int i = 0; i < options.gradient_inputs; ++i) {
    std::mt19937_64 rng(options.seed * 1000003ULL + std::uint64_t(i));
    const Tensord x0 = Tensord::Uniform(3, 8, 8, rng);
    const Tensord source = Tensord::Uniform(3, 8, 8, rng);
    const Tensord content = Tensord::Uniform(3, 8, 8, rng);
    for (auto& c : gradient_cases(net, x0, source, content)) {
      Tensord analytic = c.gradient(x0);
      if (c.name == options.inject_fault) analytic *= -1.0;
      const Tensord numeric =
          finite_diff_gradient<double>(c.loss, x0, kFiniteDifferenceStep);
      if (!worst.contains(c.name)) order.push_back(c.name);
      worst[c.name] = std::max(worst[c.name], relative_error(analytic, numeric));
    }
  }
  std::vector<CheckResult> results;
  for (const auto& name : order)
    results.push_back(make_result("gradient." + name, worst[name], kGradientTolerance, options.gradient_inputs));
  return results;
}

std::vector<CheckResult> histogram_checks(const SelfcheckOptions& options) {
  constexpr std::size_t n = 4096;
  constexpr Index bins = 256;
  double worst_count = 0, bin_mismatches = 0, order_mismatches = 0, worst_self = 0;
  for (int pair = 0; pair < options.histogram_pairs; ++pair) {
    std::mt19937_64 rng(options.seed * 7919ULL + std::uint64_t(pair));
    const std::vector<double> values = random_values(rng, pair, n);
    const Histogram<double> target = random_target(rng, bins);
    const std::vector<double> out = histogram_match(std::span<const double>(values), target);

    const auto in_order = stable_order(values);
    const auto out_order = stable_order(out);
    if (in_order != out_order) order_mismatches += 1;

    std::vector<double> requantized(std::size_t(bins), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const double q = (double(k) + 0.5) * target.total / double(n);
      const Index b = target.bin_of(out[in_order[k]]);
      if (b != oracle_bin(target.counts, q)) bin_mismatches += 1;
      requantized[std::size_t(b)] += 1;
    }
    for (Index b = 0; b < bins; ++b)
      worst_count = std::max(worst_count, std::abs(requantized[b] - target.counts[b] * double(n) / target.total));

    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const auto own = compute_histogram(std::span<const double>(values), bins, *lo, *hi);
    const auto self = histogram_match(std::span<const double>(values), own);
    for (std::size_t k = 0; k < n; ++k)
      worst_self = std::max(worst_self, std::abs(self[k] - values[k]) / own.bin_width());
  }
  const int cases = options.histogram_pairs;
  return {make_result("histogram.bin_count_deviation", worst_count, 1.0, cases),
          make_result("histogram.oracle_bin_mismatches", bin_mismatches, 0.0, cases),
          make_result("histogram.order_mismatches", order_mismatches, 0.0, cases),
          make_result("histogram.self_match_bin_widths", worst_self, 1.0, cases)};
}

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options) {
  auto results = gradient_checks(options);
  auto hist = histogram_checks(options);
  results.insert(results.end(), hist.begin(), hist.end());
  return results;
}

nlohmann::json to_json(const std::vector<CheckResult>& results) {
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const auto& r : results) {
    checks.push_back(
        {{"name", r.name}, {"max_error", r.max_error}, {"tolerance", r.tolerance}, {"passed", r.passed}, {"cases", r.cases}});
    all = all && r.passed;
  }
  return {{"passed", all}, {"checks", std::move(checks)}};
}

}  // namespace histotex
