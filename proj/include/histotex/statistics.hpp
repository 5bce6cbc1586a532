#ifndef HISTOTEX_STATISTICS_HPP_
#define HISTOTEX_STATISTICS_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "histotex/network.hpp"
#include "histotex/tensor.hpp"

namespace histotex {

inline constexpr Index kDefaultHistogramBins = 256;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-tag loss weights (alpha_l, beta_l, gamma_l, ...). Tags absent from the
/// map, or mapped to zero, do not contribute.
template <typename Scalar>
using LayerWeights = std::map<std::string, Scalar>;

// ---------------------------------------------------------------------------
// Gram matrices

/// G = F F^T over `sample_count` pixels. normalized() = G / n estimates the
/// non-central second moment E[X X^T] of the feature vector.
template <typename Scalar>
struct GramMatrix {
  Matrix<Scalar> entries;
  Index sample_count = 0;

  Index size() const { return entries.rows(); }
  Matrix<Scalar> normalized() const {
    return sample_count > 0 ? Matrix<Scalar>(entries / Scalar(sample_count)) : Matrix<Scalar>::Zero(size(), size());
  }
};

/// Gram matrix of a features x pixels matrix.
template <typename Derived>
GramMatrix<typename Derived::Scalar> gram(const Eigen::MatrixBase<Derived>& features) {
  using Scalar = typename Derived::Scalar;
  GramMatrix<Scalar> g;
  // Lower triangle by rank update, mirrored, so G is exactly symmetric.
  g.entries = Matrix<Scalar>::Zero(features.rows(), features.rows());
  g.entries.template selfadjointView<Eigen::Lower>().rankUpdate(features.derived());
  g.entries.template triangularView<Eigen::StrictlyUpper>() = g.entries.transpose();
  g.sample_count = features.cols();
  return g;
}

template <typename Scalar>
GramMatrix<Scalar> gram(const Tensor<Scalar>& F) {
  return gram(F.features());
}

/// Loss value of one layer plus its gradient w.r.t. that layer's activations.
template <typename Scalar>
struct LayerLoss {
  Scalar value = 0;
  RowMatrix<Scalar> grad;
};

/// Summed loss over tags with per-tag activation gradients.
template <typename Scalar>
struct LossResult {
  Scalar value = 0;
  ActivationSet<Scalar> grads;
};

/// weight / N^2 * || G(S)/n_S - G(O)/n_O ||_F^2 for one layer.
///
/// With equal sample counts this equals weight / |S|^2 * ||G(S) - G(O)||_F^2;
/// normalizing each Gram by its own sample count lets output and exemplar
/// differ in size.
template <typename Scalar>
LayerLoss<Scalar> gram_layer_loss(const GramMatrix<Scalar>& target, const RowMatrix<Scalar>& output, Scalar weight) {
  const Index features = output.rows(), n = output.cols();
  if (target.size() != features)
    throw ShapeError("gram loss: exemplar has " + std::to_string(target.size()) + " features, output has " +
                     std::to_string(features));
  LayerLoss<Scalar> out;
  if (n == 0 || target.sample_count == 0) {
    out.grad = RowMatrix<Scalar>::Zero(features, n);
    return out;
  }
  const Scalar scale = weight / (Scalar(features) * Scalar(features));
  Matrix<Scalar> diff = output * output.transpose();
  diff /= Scalar(n);
  diff -= target.normalized();
  out.value = scale * diff.squaredNorm();
  out.grad.noalias() = (Scalar(4) * scale / Scalar(n)) * (diff * output);
  return out;
}

template <typename Scalar>
LossResult<Scalar> gram_loss(const ActivationSet<Scalar>& source, const ActivationSet<Scalar>& output,
                             const LayerWeights<Scalar>& weights) {
  LossResult<Scalar> result;
  for (const auto& [tag, weight] : weights) {
    if (weight == Scalar(0)) continue;
    const auto s = source.find(tag);
    const auto o = output.find(tag);
    if (s == source.end() || o == output.end()) throw ConfigError("gram loss: tag '" + tag + "' missing");
    if (s->second.channels() != o->second.channels())
      throw ShapeError("gram loss at '" + tag + "': feature counts differ");
    auto layer = gram_layer_loss(gram(s->second), o->second.features(), weight);
    result.value += layer.value;
    result.grads.emplace(tag, Tensor<Scalar>(o->second.channels(), o->second.height(), o->second.width(),
                                             std::move(layer.grad)));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Mean activations

template <typename Scalar>
Vector<Scalar> feature_means(const RowMatrix<Scalar>& F) {
  if (F.cols() == 0) return Vector<Scalar>::Zero(F.rows());
  return F.rowwise().mean();
}

/// weight * sum_f (mean_f(O) - target_f)^2.
template <typename Scalar>
LayerLoss<Scalar> mean_activation_layer_loss(const Vector<Scalar>& target_means, const RowMatrix<Scalar>& output,
                                             Scalar weight) {
  if (target_means.size() != output.rows()) throw ShapeError("mean activation loss: feature counts differ");
  LayerLoss<Scalar> out;
  out.grad = RowMatrix<Scalar>::Zero(output.rows(), output.cols());
  if (output.cols() == 0) return out;
  const Vector<Scalar> diff = feature_means(output) - target_means;
  out.value = weight * diff.squaredNorm();
  const Vector<Scalar> per_pixel = (Scalar(2) * weight / Scalar(output.cols())) * diff;
  out.grad.colwise() = per_pixel;
  return out;
}

template <typename Scalar>
LossResult<Scalar> mean_activation_loss(const ActivationSet<Scalar>& source, const ActivationSet<Scalar>& output,
                                        const LayerWeights<Scalar>& weights) {
  LossResult<Scalar> result;
  for (const auto& [tag, weight] : weights) {
    if (weight == Scalar(0)) continue;
    const auto s = source.find(tag);
    const auto o = output.find(tag);
    if (s == source.end() || o == output.end()) throw ConfigError("mean activation loss: tag '" + tag + "' missing");
    auto layer = mean_activation_layer_loss(feature_means(s->second.features()), o->second.features(), weight);
    result.value += layer.value;
    result.grads.emplace(tag, Tensor<Scalar>(o->second.channels(), o->second.height(), o->second.width(),
                                             std::move(layer.grad)));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Histograms

/// Binned marginal distribution over [min, max]. Bin b covers
/// [min + b w, min + (b + 1) w) with w = (max - min) / bins; the top edge
/// belongs to the last bin.
template <typename Scalar>
struct Histogram {
  Scalar min = 0;
  Scalar max = 0;
  std::vector<Scalar> counts;
  Scalar total = 0;

  Index bin_count() const { return static_cast<Index>(counts.size()); }
  Scalar bin_width() const { return counts.empty() ? Scalar(0) : (max - min) / Scalar(counts.size()); }

  Index bin_of(Scalar v) const {
    const Index bins = bin_count();
    if (!(max > min)) return 0;
    const Scalar pos = std::floor((v - min) / (max - min) * Scalar(bins));
    if (!(pos > 0)) return 0;
    return std::min<Index>(bins - 1, static_cast<Index>(pos));
  }

  /// Mean using bin centers.
  Scalar mean() const {
    Scalar sum = 0;
    for (Index b = 0; b < bin_count(); ++b) sum += counts[b] * (min + (Scalar(b) + Scalar(0.5)) * bin_width());
    return total > 0 ? sum / total : Scalar(0);
  }
};

template <typename Scalar>
Histogram<Scalar> compute_histogram(std::span<const Scalar> values, Index bin_count, Scalar lo, Scalar hi) {
  if (values.empty()) throw ConfigError("compute_histogram: empty input");
  if (bin_count < 1) throw ConfigError("compute_histogram: bin count must be >= 1");
  if (!(lo <= hi)) throw ConfigError("compute_histogram: range min exceeds max");
  Histogram<Scalar> h;
  h.min = lo;
  h.max = hi;
  h.counts.assign(static_cast<std::size_t>(bin_count), Scalar(0));
  for (Scalar v : values) h.counts[static_cast<std::size_t>(h.bin_of(v))] += Scalar(1);
  h.total = Scalar(values.size());
  return h;
}

/// Order-preserving remap of `values` onto the distribution of `target`.
///
/// Values are ranked with a stable sort; rank k lands at target quantile
/// (k + 1/2) / n, found by inverting the target CDF with linear interpolation
/// inside bins. Output ranks equal input ranks and, re-binned on the target's
/// range, bin b receives counts[b] * n / total samples up to rounding.
template <typename Scalar>
std::vector<Scalar> histogram_match(std::span<const Scalar> values, const Histogram<Scalar>& target) {
  if (target.counts.empty() || !(target.total > 0)) throw ConfigError("histogram_match: empty target histogram");
  const std::size_t n = values.size();
  std::vector<Scalar> out(n);
  if (n == 0) return out;
  // Sorting (value, index) pairs is the stable order of the values.
  std::vector<std::pair<Scalar, std::size_t>> ranked(n);
  for (std::size_t i = 0; i < n; ++i) ranked[i] = {values[i], i};
  std::sort(ranked.begin(), ranked.end());

  const std::size_t bins = target.counts.size();
  std::vector<Scalar> cumulative(bins + 1, Scalar(0));
  for (std::size_t b = 0; b < bins; ++b) cumulative[b + 1] = cumulative[b] + target.counts[b];
  const Scalar width = target.bin_width();
  // Keeps interpolated samples strictly inside their bin so re-binning is exact.
  constexpr Scalar kEdge = Scalar(1e-7);

  std::size_t b = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const Scalar q = (Scalar(k) + Scalar(0.5)) * target.total / Scalar(n);
    while (b + 1 < bins && cumulative[b + 1] <= q) ++b;
    Scalar frac = target.counts[b] > 0 ? (q - cumulative[b]) / target.counts[b] : Scalar(0.5);
    frac = std::clamp(frac, kEdge, Scalar(1) - kEdge);
    out[ranked[k].second] = width > 0 ? target.min + (Scalar(b) + frac) * width : target.min;
  }
  return out;
}

/// Exemplar activations of one layer, kept as sorted per-feature samples so
/// a target histogram can be rebuilt over whatever range a remap needs.
template <typename Scalar>
struct HistogramTargets {
  std::vector<std::vector<Scalar>> sorted;
  Index bins = kDefaultHistogramBins;

  Index features() const { return static_cast<Index>(sorted.size()); }
  Scalar min(Index f) const { return sorted[f].front(); }
  Scalar max(Index f) const { return sorted[f].back(); }

  Histogram<Scalar> histogram(Index f, Scalar lo, Scalar hi) const {
    return compute_histogram(std::span<const Scalar>(sorted[f]), bins, lo, hi);
  }
  /// Histogram over the exemplar's own range.
  Histogram<Scalar> histogram(Index f) const { return histogram(f, min(f), max(f)); }
};

template <typename Scalar>
HistogramTargets<Scalar> histogram_targets(const RowMatrix<Scalar>& F, Index bins = kDefaultHistogramBins) {
  HistogramTargets<Scalar> t;
  t.bins = bins;
  t.sorted.resize(static_cast<std::size_t>(F.rows()));
  for (Index f = 0; f < F.rows(); ++f) {
    t.sorted[f].assign(F.row(f).data(), F.row(f).data() + F.cols());
    std::sort(t.sorted[f].begin(), t.sorted[f].end());
  }
  return t;
}

/// R(O): each feature row matched to its exemplar distribution over the union
/// of exemplar and current output ranges.
template <typename Scalar>
RowMatrix<Scalar> histogram_remap(const RowMatrix<Scalar>& output, const HistogramTargets<Scalar>& targets) {
  if (targets.features() != output.rows())
    throw ShapeError("histogram remap: " + std::to_string(targets.features()) + " target histograms for " +
                     std::to_string(output.rows()) + " features");
  RowMatrix<Scalar> remapped(output.rows(), output.cols());
  if (output.cols() == 0) return remapped;
  for (Index f = 0; f < output.rows(); ++f) {
    if (targets.sorted[f].empty()) throw ConfigError("histogram remap: empty exemplar samples");
    const std::span<const Scalar> row(output.row(f).data(), static_cast<std::size_t>(output.cols()));
    const auto [lo_it, hi_it] = std::minmax_element(row.begin(), row.end());
    const auto target = targets.histogram(f, std::min(*lo_it, targets.min(f)), std::max(*hi_it, targets.max(f)));
    const auto matched = histogram_match(row, target);
    std::copy(matched.begin(), matched.end(), remapped.row(f).data());
  }
  return remapped;
}

/// Remap against fixed per-feature histograms (ranges taken as given).
template <typename Scalar>
RowMatrix<Scalar> histogram_remap(const RowMatrix<Scalar>& output, const std::vector<Histogram<Scalar>>& targets) {
  if (static_cast<Index>(targets.size()) != output.rows())
    throw ShapeError("histogram remap: " + std::to_string(targets.size()) + " target histograms for " +
                     std::to_string(output.rows()) + " features");
  RowMatrix<Scalar> remapped(output.rows(), output.cols());
  for (Index f = 0; f < output.rows(); ++f) {
    const std::span<const Scalar> row(output.row(f).data(), static_cast<std::size_t>(output.cols()));
    const auto matched = histogram_match(row, targets[f]);
    std::copy(matched.begin(), matched.end(), remapped.row(f).data());
  }
  return remapped;
}

/// weight / |O| * ||O - R||_F^2 with the remap R held constant, so the
/// gradient is 2 weight / |O| * (O - R). `normalizer` is |O| unless a caller
/// (region losses) evaluates a subset of a larger layer.
template <typename Scalar>
LayerLoss<Scalar> histogram_layer_loss_frozen(const RowMatrix<Scalar>& output, const RowMatrix<Scalar>& remapped,
                                              Scalar weight, Scalar normalizer) {
  if (output.rows() != remapped.rows() || output.cols() != remapped.cols())
    throw ShapeError("histogram loss: remap shape differs from activations");
  LayerLoss<Scalar> out;
  out.grad = output - remapped;
  if (!(normalizer > 0)) {
    out.grad.setZero();
    return out;
  }
  out.value = weight / normalizer * out.grad.squaredNorm();
  out.grad *= Scalar(2) * weight / normalizer;
  return out;
}

template <typename Scalar>
LayerLoss<Scalar> histogram_layer_loss(const RowMatrix<Scalar>& output, const HistogramTargets<Scalar>& targets,
                                       Scalar weight) {
  return histogram_layer_loss_frozen(output, histogram_remap(output, targets), weight, Scalar(output.size()));
}

template <typename Scalar>
LayerLoss<Scalar> histogram_layer_loss(const RowMatrix<Scalar>& output, const std::vector<Histogram<Scalar>>& targets,
                                       Scalar weight) {
  return histogram_layer_loss_frozen(output, histogram_remap(output, targets), weight, Scalar(output.size()));
}

/// Tensor form of the per-layer histogram loss.
template <typename Scalar, typename Targets>
std::pair<Scalar, Tensor<Scalar>> histogram_loss(const Tensor<Scalar>& output, const Targets& targets, Scalar weight) {
  auto layer = histogram_layer_loss(output.features(), targets, weight);
  return {layer.value, Tensor<Scalar>(output.channels(), output.height(), output.width(), std::move(layer.grad))};
}

/// Per-feature mean squared remap error ||O_f - R_f||^2 / n. Bounds the
/// feature mean deviation: |mean(O_f) - mean(R_f)| <= sqrt(error_f).
template <typename Scalar>
Vector<Scalar> remap_errors(const RowMatrix<Scalar>& output, const RowMatrix<Scalar>& remapped) {
  if (output.cols() == 0) return Vector<Scalar>::Zero(output.rows());
  return (output - remapped).rowwise().squaredNorm() / Scalar(output.cols());
}

/// Everything the losses need from one exemplar layer (or one region of it).
template <typename Scalar>
struct LayerStatistics {
  GramMatrix<Scalar> gram;
  HistogramTargets<Scalar> histograms;
  Vector<Scalar> means;
  Index pixels = 0;

  bool empty() const { return pixels == 0; }
};

template <typename Scalar>
LayerStatistics<Scalar> layer_statistics(const RowMatrix<Scalar>& F, Index bins = kDefaultHistogramBins) {
  LayerStatistics<Scalar> s;
  s.pixels = F.cols();
  s.gram = gram(F);
  s.means = feature_means(F);
  if (F.cols() > 0) s.histograms = histogram_targets(F, bins);
  s.histograms.bins = bins;
  return s;
}

// ---------------------------------------------------------------------------
// Content and total variation

/// weight / |C| * ||C - O||_F^2.
template <typename Scalar>
LayerLoss<Scalar> content_layer_loss(const RowMatrix<Scalar>& content, const RowMatrix<Scalar>& output, Scalar weight) {
  if (content.rows() != output.rows() || content.cols() != output.cols())
    throw ShapeError("content loss: content and output activations differ in shape");
  LayerLoss<Scalar> out;
  out.grad = output - content;
  if (content.size() == 0) return out;
  const Scalar scale = weight / Scalar(content.size());
  out.value = scale * out.grad.squaredNorm();
  out.grad *= Scalar(2) * scale;
  return out;
}

template <typename Scalar>
LossResult<Scalar> content_loss(const ActivationSet<Scalar>& content, const ActivationSet<Scalar>& output,
                                const LayerWeights<Scalar>& weights) {
  LossResult<Scalar> result;
  for (const auto& [tag, weight] : weights) {
    if (weight == Scalar(0)) continue;
    const auto c = content.find(tag);
    const auto o = output.find(tag);
    if (c == content.end() || o == output.end()) throw ConfigError("content loss: tag '" + tag + "' missing");
    if (!c->second.same_shape(o->second)) throw ShapeError("content loss at '" + tag + "': shapes differ");
    auto layer = content_layer_loss(c->second.features(), o->second.features(), weight);
    result.value += layer.value;
    result.grads.emplace(tag, Tensor<Scalar>(o->second.channels(), o->second.height(), o->second.width(),
                                             std::move(layer.grad)));
  }
  return result;
}

/// weight / |image| * sum over channels and pixels of the squared forward
/// differences to the right and downward neighbours, with wrap-around. The
/// 1 / |image| factor (element count) keeps weight resolution-independent.
/// On a 1 x 2 x 2 checkerboard of 0/1 each of the 8 terms is 1: value 2 weight.
template <typename Scalar>
std::pair<Scalar, Tensor<Scalar>> tv_loss(const Tensor<Scalar>& image, Scalar weight) {
  const Index h = image.height(), w = image.width();
  Tensor<Scalar> grad(image.channels(), h, w);
  if (image.size() == 0) return {Scalar(0), grad};
  const Scalar scale = weight / Scalar(image.size());
  Scalar value = 0;
  for (Index c = 0; c < image.channels(); ++c) {
    for (Index y = 0; y < h; ++y) {
      const Index yd = y + 1 == h ? 0 : y + 1;
      for (Index x = 0; x < w; ++x) {
        const Index xr = x + 1 == w ? 0 : x + 1;
        const Scalar dx = image(c, y, xr) - image(c, y, x);
        const Scalar dy = image(c, yd, x) - image(c, y, x);
        value += dx * dx + dy * dy;
        grad(c, y, xr) += 2 * scale * dx;
        grad(c, y, x) -= 2 * scale * (dx + dy);
        grad(c, yd, x) += 2 * scale * dy;
      }
    }
  }
  return {scale * value, grad};
}

}  // namespace histotex

#endif  // HISTOTEX_STATISTICS_HPP_
