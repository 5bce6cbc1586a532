#ifndef HISTOTEX_NETWORK_HPP_
#define HISTOTEX_NETWORK_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "histotex/numerics.hpp"
#include "histotex/tensor.hpp"

namespace histotex {

template <typename Scalar>
struct ConvLayer {
  FilterKernels<Scalar> kernels;
};

struct RectifierLayer {};

struct PoolLayer {
  PoolMode mode = PoolMode::average;
};

template <typename Scalar>
using Layer = std::variant<ConvLayer<Scalar>, RectifierLayer, PoolLayer>;

/// Tag name (e.g. "relu1_1") -> tensor at that layer.
template <typename Scalar>
using ActivationSet = std::map<std::string, Tensor<Scalar>>;

using TagSet = std::set<std::string>;

/// Ordered layer stack with named rectifier outputs. Immutable after
/// construction by convention; every operation takes it by const reference.
template <typename Scalar>
struct Network {
  std::vector<Layer<Scalar>> layers;
  std::map<std::string, std::size_t> tags;
  /// Subtracted from input channels 0..2 before the first layer.
  std::array<Scalar, 3> input_mean{0, 0, 0};

  /// Channels expected at the input (from the first convolution).
  Index input_channels() const {
    for (const auto& layer : layers)
      if (const auto* conv = std::get_if<ConvLayer<Scalar>>(&layer)) return conv->kernels.in_channels;
    return 0;
  }

  /// Number of pooling layers before layer `index` (inclusive).
  int pools_through(std::size_t index) const {
    int count = 0;
    for (std::size_t i = 0; i <= index && i < layers.size(); ++i)
      if (std::holds_alternative<PoolLayer>(layers[i])) ++count;
    return count;
  }

  std::size_t layer_of(const std::string& tag) const {
    auto it = tags.find(tag);
    if (it == tags.end()) throw ConfigError("unknown layer tag '" + tag + "'");
    return it->second;
  }

  /// Checks channel compatibility and that tags name rectifier outputs.
  void validate() const {
    Index channels = -1;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (const auto* conv = std::get_if<ConvLayer<Scalar>>(&layers[i])) {
        conv->kernels.validate();
        if (channels >= 0 && conv->kernels.in_channels != channels)
          throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(conv->kernels.in_channels) +
                           " channels, previous layer produces " + std::to_string(channels));
        channels = conv->kernels.out_channels;
      }
    }
    for (const auto& [name, index] : tags) {
      if (index >= layers.size()) throw ConfigError("tag '" + name + "' points past the last layer");
      if (!std::holds_alternative<RectifierLayer>(layers[index]))
        throw ConfigError("tag '" + name + "' does not name a rectifier output");
    }
  }

  friend bool operator==(const Network& a, const Network& b) {
    if (a.layers.size() != b.layers.size() || a.tags != b.tags || a.input_mean != b.input_mean) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      if (a.layers[i].index() != b.layers[i].index()) return false;
      if (const auto* ca = std::get_if<ConvLayer<Scalar>>(&a.layers[i])) {
        if (!(ca->kernels == std::get<ConvLayer<Scalar>>(b.layers[i]).kernels)) return false;
      } else if (const auto* pa = std::get_if<PoolLayer>(&a.layers[i])) {
        if (pa->mode != std::get<PoolLayer>(b.layers[i]).mode) return false;
      }
    }
    return true;
  }
};

/// Layer outputs of one forward pass; outputs[i] is the output of layer i.
template <typename Scalar>
struct ForwardTrace {
  Tensor<Scalar> input;  // after mean subtraction
  std::vector<Tensor<Scalar>> outputs;

  const Tensor<Scalar>& input_of(std::size_t layer) const { return layer == 0 ? input : outputs[layer - 1]; }
};

namespace detail {

template <typename Scalar>
std::size_t deepest_layer(const Network<Scalar>& net, const TagSet& tags) {
  std::size_t deepest = 0;
  for (const auto& tag : tags) deepest = std::max(deepest, net.layer_of(tag));
  return deepest;
}

}  // namespace detail

/// Runs layers 0..last inclusive and records every intermediate output.
template <typename Scalar>
ForwardTrace<Scalar> trace_forward(const Tensor<Scalar>& image, const Network<Scalar>& net, std::size_t last) {
  if (net.input_channels() != image.channels())
    throw ShapeError("network expects " + std::to_string(net.input_channels()) + " input channels, image has " +
                     std::to_string(image.channels()));
  ForwardTrace<Scalar> trace;
  trace.input = image;
  for (Index c = 0; c < std::min<Index>(3, image.channels()); ++c)
    if (net.input_mean[c] != Scalar(0)) trace.input.features().row(c).array() -= net.input_mean[c];
  trace.outputs.reserve(last + 1);
  for (std::size_t i = 0; i <= last && i < net.layers.size(); ++i) {
    const Tensor<Scalar>& in = trace.input_of(i);
    std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, ConvLayer<Scalar>>) {
            trace.outputs.push_back(conv2d_circular(in, layer.kernels));
          } else if constexpr (std::is_same_v<L, RectifierLayer>) {
            trace.outputs.push_back(rectify(in));
          } else {
            trace.outputs.push_back(pool2(in, layer.mode));
          }
        },
        net.layers[i]);
  }
  return trace;
}

template <typename Scalar>
ForwardTrace<Scalar> trace_forward(const Tensor<Scalar>& image, const Network<Scalar>& net, const TagSet& tags) {
  return trace_forward(image, net, detail::deepest_layer(net, tags));
}

template <typename Scalar>
ActivationSet<Scalar> collect(const ForwardTrace<Scalar>& trace, const Network<Scalar>& net, const TagSet& tags) {
  ActivationSet<Scalar> acts;
  for (const auto& tag : tags) {
    const std::size_t layer = net.layer_of(tag);
    if (layer >= trace.outputs.size()) throw ConfigError("trace does not reach tag '" + tag + "'");
    acts.emplace(tag, trace.outputs[layer]);
  }
  return acts;
}

/// Activations at the requested tags.
template <typename Scalar>
ActivationSet<Scalar> forward(const Tensor<Scalar>& image, const Network<Scalar>& net, const TagSet& tags) {
  for (const auto& tag : tags) net.layer_of(tag);
  if (tags.empty()) return {};
  return collect(trace_forward(image, net, tags), net, tags);
}

/// dLoss/dImage given dLoss/dActivation at one or more tags of a recorded pass.
template <typename Scalar>
Tensor<Scalar> backward(const ForwardTrace<Scalar>& trace, const Network<Scalar>& net,
                        const ActivationSet<Scalar>& activation_grads) {
  if (activation_grads.empty()) return Tensor<Scalar>(trace.input.channels(), trace.input.height(), trace.input.width());
  std::map<std::size_t, const Tensor<Scalar>*> by_layer;
  for (const auto& [tag, grad] : activation_grads) {
    const std::size_t layer = net.layer_of(tag);
    if (layer >= trace.outputs.size()) throw ConfigError("gradient at '" + tag + "' beyond the recorded pass");
    if (!grad.same_shape(trace.outputs[layer]))
      throw ShapeError("gradient at '" + tag + "' has shape " + grad.shape_string() + ", activation is " +
                       trace.outputs[layer].shape_string());
    by_layer[layer] = &grad;
  }
  const std::size_t top = by_layer.rbegin()->first;
  Tensor<Scalar> grad = *by_layer[top];
  for (std::size_t i = top + 1; i-- > 0;) {
    if (i != top) {
      auto it = by_layer.find(i);
      if (it != by_layer.end()) grad += *it->second;
    }
    const Tensor<Scalar>& in = trace.input_of(i);
    grad = std::visit(
        [&](const auto& layer) -> Tensor<Scalar> {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, ConvLayer<Scalar>>) {
            return conv2d_circular_backward(in, layer.kernels, grad);
          } else if constexpr (std::is_same_v<L, RectifierLayer>) {
            return rectify_backward(in, grad);
          } else {
            return pool2_backward(in, grad, layer.mode);
          }
        },
        net.layers[i]);
  }
  return grad;
}

/// Recomputes the forward pass, then backpropagates the tag gradients.
template <typename Scalar>
Tensor<Scalar> backward_to_image(const Tensor<Scalar>& image, const Network<Scalar>& net,
                                 const ActivationSet<Scalar>& activation_grads) {
  TagSet tags;
  for (const auto& entry : activation_grads) tags.insert(entry.first);
  if (tags.empty()) return Tensor<Scalar>(image.channels(), image.height(), image.width());
  return backward(trace_forward(image, net, tags), net, activation_grads);
}

/// Channel widths of the desk-scale stand-in for the VGG-19 prefix.
inline std::vector<Index> default_topology() { return {3, 16, 32, 64, 128}; }

/// Tag of the first rectifier of block b (1-based), "relu{b}_1".
inline std::string block_tag(int block) { return "relu" + std::to_string(block) + "_1"; }

/// Seeded random filter bank: one conv + rectifier per block, 2x2 pooling
/// between blocks, tags relu{b}_1. Weights are standard normal draws with each
/// filter scaled to unit Frobenius norm; biases are zero.
template <typename Scalar>
Network<Scalar> random_filter_bank(std::uint64_t seed, const std::vector<Index>& topology, Index kernel = 3,
                                   PoolMode pooling = PoolMode::average) {
  if (topology.size() < 2) throw ConfigError("topology needs an input width and at least one block");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Network<Scalar> net;
  for (std::size_t b = 1; b < topology.size(); ++b) {
    if (b > 1) net.layers.push_back(PoolLayer{pooling});
    FilterKernels<Scalar> k(topology[b], topology[b - 1], kernel, kernel);
    for (Index o = 0; o < k.out_channels; ++o) {
      Eigen::VectorXd filter(k.weights.cols());
      for (Index j = 0; j < filter.size(); ++j) filter[j] = normal(rng);
      filter /= filter.norm();
      k.weights.row(o) = filter.cast<Scalar>().transpose();
    }
    net.layers.push_back(ConvLayer<Scalar>{std::move(k)});
    net.layers.push_back(RectifierLayer{});
    net.tags[block_tag(static_cast<int>(b))] = net.layers.size() - 1;
  }
  return net;
}

}  // namespace histotex

#endif  // HISTOTEX_NETWORK_HPP_
