#include "doctest.h"

#include <random>

#include "histotex/network.hpp"
#include "histotex/statistics.hpp"

using namespace histotex;

namespace {

Tensord random_image(Index c, Index h, Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensord::Uniform(c, h, w, rng);
}

// Conv + rectifier blocks without pooling, so the stack is shift equivariant.
Network<double> pool_free_net(std::uint64_t seed) {
  Network<double> net = random_filter_bank<double>(seed, {3, 5});
  const Network<double> second = random_filter_bank<double>(seed + 1, {5, 4});
  net.layers.push_back(second.layers[0]);
  net.layers.push_back(RectifierLayer{});
  net.tags["relu1_2"] = net.layers.size() - 1;
  net.validate();
  return net;
}

}  // namespace

TEST_CASE("random_filter_bank: deterministic, unit-norm filters, zero biases") {
  const auto a = random_filter_bank<double>(3, default_topology());
  const auto b = random_filter_bank<double>(3, default_topology());
  const auto c = random_filter_bank<double>(4, default_topology());
  CHECK(a == b);
  CHECK_FALSE(a == c);
  a.validate();
  CHECK(a.tags.size() == 4);
  for (const char* tag : {"relu1_1", "relu2_1", "relu3_1", "relu4_1"}) CHECK(a.tags.count(tag) == 1);
  for (const auto& layer : a.layers)
    if (const auto* conv = std::get_if<ConvLayer<double>>(&layer)) {
      CHECK((conv->kernels.weights.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(conv->kernels.bias.isZero());
    }
  CHECK_THROWS_AS(random_filter_bank<double>(1, {3}), ConfigError);
}

TEST_CASE("Network::validate rejects bad tags and channel chains") {
  auto net = random_filter_bank<double>(1, {3, 8, 16});
  net.tags["bogus"] = 0;  // a convolution, not a rectifier
  CHECK_THROWS_AS(net.validate(), ConfigError);
  auto broken = random_filter_bank<double>(1, {3, 8, 16});
  std::get<ConvLayer<double>>(broken.layers[3]).kernels = FilterKernels<double>(16, 7, 3, 3);
  CHECK_THROWS_AS(broken.validate(), ShapeError);
}

TEST_CASE("forward: zero image and zero biases give zero activations") {
  const auto net = random_filter_bank<double>(2, default_topology());
  const auto acts = forward(Tensord(3, 24, 24), net, {"relu1_1", "relu2_1", "relu3_1", "relu4_1"});
  CHECK(acts.size() == 4);
  for (const auto& [tag, t] : acts) CHECK(t.norm() == 0.0);
  CHECK(acts.at("relu4_1").channels() == 128);
  CHECK(acts.at("relu4_1").height() == 3);
}

TEST_CASE("forward: single block equals rectify(conv) computed directly") {
  const auto net = random_filter_bank<double>(5, {3, 6});
  const Tensord x = random_image(3, 9, 7, 6);
  const auto& kernels = std::get<ConvLayer<double>>(net.layers[0]).kernels;
  CHECK(forward(x, net, {"relu1_1"}).at("relu1_1") == rectify(conv2d_circular(x, kernels)));
}

TEST_CASE("forward: unknown tags and channel mismatches are errors") {
  const auto net = random_filter_bank<double>(5, {3, 6});
  CHECK_THROWS_AS(forward(random_image(3, 8, 8, 1), net, {"relu9_9"}), ConfigError);
  CHECK_THROWS_AS(forward(random_image(2, 8, 8, 1), net, {"relu1_1"}), ShapeError);
}

TEST_CASE("forward: activations are nonnegative") {
  const auto net = random_filter_bank<double>(8, default_topology());
  const auto acts = forward(random_image(3, 32, 32, 9), net, {"relu1_1", "relu2_1", "relu3_1", "relu4_1"});
  for (const auto& [tag, t] : acts) CHECK(t.features().minCoeff() >= 0.0);
}

TEST_CASE("forward: input mean is subtracted from the first three channels") {
  auto net = random_filter_bank<double>(5, {3, 4});
  const Tensord x = random_image(3, 8, 8, 2);
  net.input_mean = {0.1, 0.2, 0.3};
  Tensord shifted = x;
  for (Index c = 0; c < 3; ++c) shifted.features().row(c).array() -= net.input_mean[c];
  auto plain = net;
  plain.input_mean = {0, 0, 0};
  CHECK(forward(x, net, {"relu1_1"}).at("relu1_1") == forward(shifted, plain, {"relu1_1"}).at("relu1_1"));
}

TEST_CASE("forward: cyclic shifts commute with a pool-free stack") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto net = pool_free_net(100 + seed);
    const Tensord x = random_image(3, 10, 12, 200 + seed);
    const Index dy = Index(seed % 7) - 3, dx = Index(seed * 5 % 11);
    const auto a = forward(cyclic_shift(x, dy, dx), net, {"relu1_2"}).at("relu1_2");
    const auto b = cyclic_shift(forward(x, net, {"relu1_2"}).at("relu1_2"), dy, dx);
    CHECK((a - b).norm() <= 1e-12 * std::max(1.0, b.norm()));
  }
}

TEST_CASE("backward_to_image: zero gradients, linearity and the adjoint test") {
  const auto net = random_filter_bank<double>(11, {3, 6, 8});
  const Tensord x = random_image(3, 8, 8, 12);
  const auto acts = forward(x, net, {"relu1_1", "relu2_1"});
  ActivationSet<double> zero{{"relu1_1", Tensord(6, 8, 8)}, {"relu2_1", Tensord(8, 4, 4)}};
  CHECK(backward_to_image(x, net, zero).norm() == 0.0);

  std::mt19937_64 rng(13);
  ActivationSet<double> g1{{"relu1_1", Tensord::Uniform(6, 8, 8, rng, -1.0, 1.0)}};
  ActivationSet<double> g2{{"relu2_1", Tensord::Uniform(8, 4, 4, rng, -1.0, 1.0)}};
  ActivationSet<double> both{{"relu1_1", g1.at("relu1_1")}, {"relu2_1", g2.at("relu2_1")}};
  const Tensord sum = backward_to_image(x, net, g1) + backward_to_image(x, net, g2);
  CHECK(relative_error(backward_to_image(x, net, both), sum) < 1e-10);

  // Zero biases make the stack positively homogeneous and piecewise linear,
  // so J x = f(x) exactly and <f(x), u> = <x, J^T u> is an adjoint test.
  const double lhs = dot(acts.at("relu2_1"), g2.at("relu2_1"));
  const double rhs = dot(x, backward_to_image(x, net, g2));
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));

  ActivationSet<double> bad{{"relu2_1", Tensord(8, 4, 5)}};
  CHECK_THROWS_AS(backward_to_image(x, net, bad), ShapeError);
}

TEST_CASE("backward_to_image: Gram loss through two blocks matches finite differences") {
  const auto net = random_filter_bank<double>(21, {3, 6, 8});
  const LayerWeights<double> weights{{"relu1_1", 0.7}, {"relu2_1", 1.3}};
  const TagSet tags{"relu1_1", "relu2_1"};
  const auto style = forward(random_image(3, 8, 8, 22), net, tags);
  const Tensord x = random_image(3, 8, 8, 23);
  const auto loss = [&](const Tensord& v) { return gram_loss(style, forward(v, net, tags), weights).value; };
  const auto result = gram_loss(style, forward(x, net, tags), weights);
  const Tensord analytic = backward_to_image(x, net, result.grads);
  CHECK(relative_error(analytic, finite_diff_gradient<double>(loss, x, 1e-6)) < 1e-4);
}
