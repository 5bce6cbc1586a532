#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "histotex/network.hpp"
#include "histotex/statistics.hpp"

using namespace histotex;

namespace {

Tensord random_tensor(Index c, Index h, Index w, std::uint64_t seed, double lo = 0, double hi = 1) {
  std::mt19937_64 rng(seed);
  return Tensord::Uniform(c, h, w, rng, lo, hi);
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

Histogram<double> histogram_of(const std::vector<double>& v, Index bins) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return compute_histogram(std::span<const double>(v), bins, *lo, *hi);
}

}  // namespace

TEST_CASE("gram: constant feature, symmetry, duplicated rows") {
  const auto g = gram(Tensord::Constant(1, 3, 5, 1.0));
  CHECK(g.entries(0, 0) == 15.0);
  CHECK(g.sample_count == 15);
  CHECK(g.normalized()(0, 0) == 1.0);

  Tensord dup = random_tensor(2, 4, 4, 1);
  dup.features().row(1) = dup.features().row(0);
  const auto d = gram(dup);
  CHECK(d.entries(0, 0) == d.entries(0, 1));
  CHECK(d.entries(0, 1) == d.entries(1, 0));
  CHECK(d.entries(1, 1) == d.entries(0, 0));

  const auto r = gram(random_tensor(5, 6, 6, 2));
  CHECK(r.entries == r.entries.transpose());
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix<double>>(r.entries).eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("gram: constant 1/sqrt2 and half 0 / half 1 share normalized moment 1/2") {
  const auto flat = gram(Tensord::Constant(1, 4, 4, 1 / std::sqrt(2.0)));
  Tensord split(1, 4, 4);
  for (Index y = 0; y < 2; ++y)
    for (Index x = 0; x < 4; ++x) split(0, y, x) = 1.0;
  CHECK(std::abs(flat.normalized()(0, 0) - 0.5) < 1e-12);
  CHECK(gram(split).normalized()(0, 0) == 0.5);
}

TEST_CASE("gram_loss: zero at the source, linear in weights, finite differences") {
  const ActivationSet<double> s{{"a", random_tensor(3, 4, 4, 3)}, {"b", random_tensor(2, 2, 2, 4)}};
  const auto self = gram_loss(s, s, LayerWeights<double>{{"a", 1.0}, {"b", 2.0}});
  CHECK(self.value == 0.0);
  for (const auto& [tag, g] : self.grads) CHECK(g.norm() == 0.0);

  const ActivationSet<double> o{{"a", random_tensor(3, 4, 4, 5)}, {"b", random_tensor(2, 2, 2, 6)}};
  const auto one = gram_loss(s, o, LayerWeights<double>{{"a", 1.0}, {"b", 1.0}});
  const auto two = gram_loss(s, o, LayerWeights<double>{{"a", 2.0}, {"b", 2.0}});
  CHECK(two.value == doctest::Approx(2 * one.value).epsilon(1e-14));
  CHECK(relative_error(two.grads.at("a"), one.grads.at("a") * 2.0) < 1e-14);
  CHECK(one.value > 0);

  for (const std::string tag : {"a", "b"}) {
    const auto f = [&](const Tensord& v) {
      auto moved = o;
      moved.at(tag) = v;
      return gram_loss(s, moved, LayerWeights<double>{{"a", 0.7}, {"b", 1.3}}).value;
    };
    const auto analytic = gram_loss(s, o, LayerWeights<double>{{"a", 0.7}, {"b", 1.3}}).grads.at(tag);
    CHECK(relative_error(analytic, finite_diff_gradient<double>(f, o.at(tag), 1e-6)) < 1e-4);
  }

  // Exemplar and output may differ in size; feature counts may not.
  const ActivationSet<double> big{{"a", random_tensor(3, 8, 8, 7)}};
  CHECK_NOTHROW(gram_loss(big, o, LayerWeights<double>{{"a", 1.0}}));
  const ActivationSet<double> wrong{{"a", random_tensor(4, 4, 4, 8)}};
  CHECK_THROWS_AS(gram_loss(wrong, o, LayerWeights<double>{{"a", 1.0}}), ShapeError);
  CHECK_THROWS_AS(gram_loss(s, o, LayerWeights<double>{{"c", 1.0}}), ConfigError);
}

TEST_CASE("gram_loss on a 2x4x4 input agrees with finite differences") {
  const ActivationSet<double> s{{"a", random_tensor(2, 4, 4, 31)}};
  const Tensord o = random_tensor(2, 4, 4, 32);
  const auto f = [&](const Tensord& v) { return gram_loss(s, {{"a", v}}, LayerWeights<double>{{"a", 1.0}}).value; };
  const auto analytic = gram_loss(s, {{"a", o}}, LayerWeights<double>{{"a", 1.0}}).grads.at("a");
  CHECK(relative_error(analytic, finite_diff_gradient<double>(f, o, 1e-6)) < 1e-4);
}

TEST_CASE("mean_activation_loss") {
  Tensord a(1, 2, 2), b(1, 2, 2);
  a(0, 0, 0) = 4;
  b(0, 1, 1) = 4;
  CHECK(mean_activation_loss<double>({{"t", a}}, {{"t", b}}, {{"t", 1.0}}).value == 0.0);

  const auto zeros = Tensord::Constant(1, 3, 3, 0.0), ones = Tensord::Constant(1, 3, 3, 1.0);
  CHECK(mean_activation_loss<double>({{"t", zeros}}, {{"t", ones}}, {{"t", 1.0}}).value == 1.0);

  const ActivationSet<double> s{{"t", random_tensor(3, 4, 4, 9)}};
  const Tensord o = random_tensor(3, 4, 4, 10);
  const auto f = [&](const Tensord& v) { return mean_activation_loss<double>(s, {{"t", v}}, {{"t", 0.9}}).value; };
  const auto analytic = mean_activation_loss<double>(s, {{"t", o}}, {{"t", 0.9}}).grads.at("t");
  CHECK(relative_error(analytic, finite_diff_gradient<double>(f, o, 1e-6)) < 1e-4);
  CHECK_THROWS_AS(mean_activation_loss<double>(s, {{"t", random_tensor(2, 4, 4, 1)}}, {{"t", 1.0}}), ShapeError);
}

TEST_CASE("compute_histogram") {
  const std::vector<double> constant(10, 0.3);
  const auto c = compute_histogram(std::span<const double>(constant), 16, 0.3, 0.3);
  CHECK(c.counts[0] == 10.0);
  CHECK(std::accumulate(c.counts.begin(), c.counts.end(), 0.0) == 10.0);

  const auto v = random_values(1000, 1);
  const auto h = histogram_of(v, 37);
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), 0.0) == 1000.0);
  CHECK(h.total == 1000.0);
  CHECK(h.bin_of(h.max) == 36);
  CHECK(h.bin_of(h.min) == 0);

  // Ramp of bin centers: every bin gets exactly k samples.
  const Index bins = 256, k = 3;
  std::vector<double> ramp;
  for (Index b = 0; b < bins; ++b)
    for (Index j = 0; j < k; ++j) ramp.push_back((b + (j + 1.0) / (k + 1.0)) / bins);
  const auto r = compute_histogram(std::span<const double>(ramp), bins, 0.0, 1.0);
  CHECK(std::all_of(r.counts.begin(), r.counts.end(), [](double n) { return n == 3.0; }));

  const std::vector<double> empty;
  CHECK_THROWS_AS(compute_histogram(std::span<const double>(empty), 4, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(compute_histogram(std::span<const double>(v), 0, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(compute_histogram(std::span<const double>(v), 4, 1.0, 0.0), ConfigError);
}

TEST_CASE("histogram_match: order preserving, self match, target counts") {
  const auto v = random_values(4096, 2);
  const auto target_values = random_values(4096, 3);
  const auto target = histogram_of(target_values, 256);
  const auto out = histogram_match(std::span<const double>(v), target);

  std::vector<std::size_t> by_input(v.size()), by_output(v.size());
  std::iota(by_input.begin(), by_input.end(), 0);
  by_output = by_input;
  std::stable_sort(by_input.begin(), by_input.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::stable_sort(by_output.begin(), by_output.end(), [&](auto a, auto b) { return out[a] < out[b]; });
  CHECK(by_input == by_output);

  const auto rebinned = compute_histogram(std::span<const double>(out), 256, target.min, target.max);
  double worst = 0;
  for (Index b = 0; b < 256; ++b) worst = std::max(worst, std::abs(rebinned.counts[b] - target.counts[b]));
  CHECK(worst <= 1.0);

  const auto self = histogram_of(v, 256);
  const auto same = histogram_match(std::span<const double>(v), self);
  double drift = 0;
  for (std::size_t i = 0; i < v.size(); ++i) drift = std::max(drift, std::abs(same[i] - v[i]));
  CHECK(drift <= self.bin_width());

  // Ties keep input order: equal inputs map to non-decreasing outputs.
  const std::vector<double> ties{1, 0, 1, 0, 1};
  const auto tied = histogram_match(std::span<const double>(ties), histogram_of(random_values(5, 4), 4));
  CHECK(tied[1] <= tied[3]);
  CHECK(tied[0] <= tied[2]);
  CHECK(tied[2] <= tied[4]);
  CHECK(tied[3] <= tied[0]);
}

TEST_CASE("histogram_loss: closed-form gradient, matched input, descent") {
  const Tensord exemplar = random_tensor(3, 16, 16, 5);
  const auto targets = histogram_targets<double>(exemplar.features());
  CHECK(histogram_loss(exemplar, targets, 1.0).first <= std::pow(exemplar.features().maxCoeff() / 256, 2));

  const Tensord o = random_tensor(3, 16, 16, 6, -0.5, 2.0);
  const auto [value, grad] = histogram_loss(o, targets, 0.8);
  const RowMatrix<double> remapped = histogram_remap<double>(o.features(), targets);
  const RowMatrix<double> expected = (2 * 0.8 / double(o.size())) * (o.features() - remapped);
  CHECK((grad.features() - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(value == doctest::Approx(0.8 / o.size() * (o.features() - remapped).squaredNorm()).epsilon(1e-14));

  const Tensord stepped = o - grad * (0.1 * o.size());
  CHECK(histogram_loss(stepped, targets, 0.8).first < value);

  CHECK_THROWS_AS(histogram_loss(random_tensor(2, 4, 4, 1), targets, 1.0), ShapeError);
}

TEST_CASE("histogram_loss frozen remap matches finite differences of the frozen objective") {
  const Tensord o = random_tensor(2, 4, 4, 40);
  const auto targets = histogram_targets<double>(random_tensor(2, 4, 4, 41).features());
  const RowMatrix<double> remapped = histogram_remap<double>(o.features(), targets);
  const auto f = [&](const Tensord& v) {
    return histogram_layer_loss_frozen<double>(v.features(), remapped, 1.1, double(v.size())).value;
  };
  const auto analytic = histogram_loss(o, targets, 1.1).second;
  CHECK(relative_error(analytic, finite_diff_gradient<double>(f, o, 1e-6)) < 1e-4);
}

TEST_CASE("content_loss") {
  const ActivationSet<double> c{{"t", random_tensor(2, 3, 3, 7)}};
  CHECK(content_loss<double>(c, c, {{"t", 1.0}}).value == 0.0);
  Tensord zero(1, 1, 1), two = Tensord::Constant(1, 1, 1, 2.0);
  CHECK(content_loss<double>({{"t", zero}}, {{"t", two}}, {{"t", 1.0}}).value == 4.0);

  const Tensord o = random_tensor(2, 3, 3, 8);
  const auto f = [&](const Tensord& v) { return content_loss<double>(c, {{"t", v}}, {{"t", 1.7}}).value; };
  const auto analytic = content_loss<double>(c, {{"t", o}}, {{"t", 1.7}}).grads.at("t");
  CHECK(relative_error(analytic, finite_diff_gradient<double>(f, o, 1e-6)) < 1e-4);
  CHECK_THROWS_AS(content_loss<double>(c, {{"t", random_tensor(2, 3, 4, 1)}}, {{"t", 1.0}}), ShapeError);
}

TEST_CASE("tv_loss: constant, checkerboard by enumeration, finite differences") {
  CHECK(tv_loss(Tensord::Constant(3, 5, 4, 0.6), 2.0).first == 0.0);

  Tensord board(1, 2, 2);
  board(0, 0, 1) = 1;
  board(0, 1, 0) = 1;
  // Every pixel has a right and a down neighbour (wrapping): 8 differences.
  double sum = 0;
  for (Index y = 0; y < 2; ++y)
    for (Index x = 0; x < 2; ++x) {
      sum += std::pow(board(0, y, (x + 1) % 2) - board(0, y, x), 2);
      sum += std::pow(board(0, (y + 1) % 2, x) - board(0, y, x), 2);
    }
  CHECK(sum == 8.0);
  const double omega = 0.75;
  CHECK(tv_loss(board, omega).first == omega * sum / board.size());
  CHECK(tv_loss(board, omega).first == 2 * omega);

  const Tensord x = random_tensor(3, 5, 6, 9);
  const auto f = [&](const Tensord& v) { return tv_loss(v, 0.4).first; };
  CHECK(relative_error(tv_loss(x, 0.4).second, finite_diff_gradient<double>(f, x, 1e-6)) < 1e-4);
}

TEST_CASE("Gram and histogram losses ignore cyclic shifts") {
  const Tensord s = random_tensor(4, 8, 8, 10);
  const Tensord o = random_tensor(4, 8, 8, 11);
  const auto targets = histogram_targets<double>(s.features());
  const double g = gram_loss<double>({{"t", s}}, {{"t", o}}, {{"t", 1.0}}).value;
  const double h = histogram_loss(o, targets, 1.0).first;
  for (auto [dy, dx] : {std::pair<Index, Index>{1, 2}, {5, 0}, {7, 3}}) {
    const Tensord shifted = cyclic_shift(o, dy, dx);
    CHECK(std::abs(gram_loss<double>({{"t", s}}, {{"t", shifted}}, {{"t", 1.0}}).value - g) < 1e-10);
    CHECK(std::abs(histogram_loss(shifted, targets, 1.0).first - h) < 1e-10);
  }
}

TEST_CASE("histogram bound: mean deviation <= sqrt(delta) + bin width") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensord s = random_tensor(3, 16, 16, 50 + seed);
    const Tensord o = random_tensor(3, 16, 16, 60 + seed, 0.2, 1.4);
    const auto targets = histogram_targets<double>(s.features());
    const RowMatrix<double> remapped = histogram_remap<double>(o.features(), targets);
    const auto delta = remap_errors<double>(o.features(), remapped);
    const auto om = feature_means<double>(o.features()), sm = feature_means<double>(s.features());
    for (Index f = 0; f < 3; ++f) {
      const double lo = std::min(o.features().row(f).minCoeff(), s.features().row(f).minCoeff());
      const double hi = std::max(o.features().row(f).maxCoeff(), s.features().row(f).maxCoeff());
      CHECK(std::abs(om[f] - sm[f]) <= std::sqrt(delta[f]) + (hi - lo) / 256);
    }
  }
}

TEST_CASE("layer_statistics bundles Gram, histograms and means") {
  const Tensord s = random_tensor(3, 4, 4, 12);
  const auto stats = layer_statistics<double>(s.features(), 64);
  CHECK(stats.pixels == 16);
  CHECK(stats.gram.entries == gram(s).entries);
  CHECK(stats.histograms.bins == 64);
  CHECK(stats.histograms.features() == 3);
  CHECK((stats.means - feature_means<double>(s.features())).norm() == 0.0);
  CHECK(layer_statistics<double>(RowMatrix<double>(3, 0)).empty());
}
