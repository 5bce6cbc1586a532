#ifndef HISTOTEX_LOCALIZED_HPP_
#define HISTOTEX_LOCALIZED_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "histotex/network.hpp"
#include "histotex/statistics.hpp"

namespace histotex {

/// Per-pixel region labels 0..region_count-1 (painting by numbers).
///
/// Masks built from user input have every region occupied. Downsampled masks
/// may lose small regions; those keep their id with a zero pixel count.
class IndexedMask {
 public:
  IndexedMask() = default;

  /// Validates ids and, unless `allow_empty`, that every region is painted.
  IndexedMask(Index height, Index width, std::vector<int> indices, int region_count, bool allow_empty = false)
      : height_(height), width_(width), indices_(std::move(indices)), region_count_(region_count) {
    if (height < 0 || width < 0 || static_cast<Index>(indices_.size()) != height * width)
      throw ShapeError("indexed mask: " + std::to_string(indices_.size()) + " labels for " + std::to_string(height) +
                       "x" + std::to_string(width) + " pixels");
    if (region_count < 1) throw ConfigError("indexed mask: region count must be >= 1");
    counts_.assign(static_cast<std::size_t>(region_count), 0);
    for (int id : indices_) {
      if (id < 0 || id >= region_count)
        throw ConfigError("indexed mask: region id " + std::to_string(id) + " outside 0.." +
                          std::to_string(region_count - 1));
      ++counts_[static_cast<std::size_t>(id)];
    }
    if (!allow_empty)
      for (int r = 0; r < region_count; ++r)
        if (counts_[r] == 0) throw ConfigError("indexed mask: region " + std::to_string(r) + " has no pixels");
  }

  /// Single region covering the whole image.
  static IndexedMask Uniform(Index height, Index width) {
    return IndexedMask(height, width, std::vector<int>(static_cast<std::size_t>(height * width), 0), 1);
  }

  Index height() const { return height_; }
  Index width() const { return width_; }
  int region_count() const { return region_count_; }
  int operator()(Index y, Index x) const { return indices_[static_cast<std::size_t>(y * width_ + x)]; }
  const std::vector<int>& indices() const { return indices_; }
  Index pixel_count(int region) const { return counts_[static_cast<std::size_t>(region)]; }

  /// Pixel indices (row-major) of every region, each list ascending.
  std::vector<std::vector<Index>> region_pixels() const {
    std::vector<std::vector<Index>> pixels(static_cast<std::size_t>(region_count_));
    for (int r = 0; r < region_count_; ++r) pixels[r].reserve(static_cast<std::size_t>(counts_[r]));
    for (std::size_t p = 0; p < indices_.size(); ++p) pixels[indices_[p]].push_back(static_cast<Index>(p));
    return pixels;
  }

  friend bool operator==(const IndexedMask& a, const IndexedMask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.region_count_ == b.region_count_ &&
           a.indices_ == b.indices_;
  }

 private:
  Index height_ = 0;
  Index width_ = 0;
  std::vector<int> indices_;
  int region_count_ = 0;
  std::vector<Index> counts_;
};

/// Maps distinct gray levels to region ids in ascending order of level.
inline IndexedMask mask_from_gray_levels(Index height, Index width, const std::vector<std::uint8_t>& gray) {
  if (static_cast<Index>(gray.size()) != height * width) throw ShapeError("mask image size mismatch");
  std::array<int, 256> id_of{};
  id_of.fill(-1);
  for (auto g : gray) id_of[g] = 0;
  int next = 0;
  for (int& id : id_of)
    if (id == 0) id = next++;
  std::vector<int> indices(gray.size());
  for (std::size_t p = 0; p < gray.size(); ++p) indices[p] = id_of[gray[p]];
  return IndexedMask(height, width, std::move(indices), next);
}

struct GrayMask {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> levels;
};

/// Style and output masks with ids shared between them: the gray levels of
/// the style mask, ascending, become 0..M-1. A level used only by the output
/// has no style statistics and is rejected; style levels missing from the
/// output leave that id unoccupied in the output mask.
inline std::pair<IndexedMask, IndexedMask> paired_masks_from_gray_levels(const GrayMask& style, const GrayMask& output) {
  const IndexedMask style_mask = mask_from_gray_levels(style.height, style.width, style.levels);
  std::array<int, 256> id_of{};
  id_of.fill(-1);
  for (std::size_t p = 0; p < style.levels.size(); ++p) id_of[style.levels[p]] = style_mask.indices()[p];
  if (static_cast<Index>(output.levels.size()) != output.height * output.width)
    throw ShapeError("mask image size mismatch");
  std::vector<int> indices(output.levels.size());
  for (std::size_t p = 0; p < output.levels.size(); ++p) {
    indices[p] = id_of[output.levels[p]];
    if (indices[p] < 0)
      throw ConfigError("output mask gray level " + std::to_string(output.levels[p]) + " does not occur in the style mask");
  }
  return {style_mask, IndexedMask(output.height, output.width, std::move(indices), style_mask.region_count(), true)};
}

struct DownsampledMask {
  IndexedMask mask;
  /// Regions present before downsampling that have no pixel afterwards.
  std::vector<int> vanished;
};

/// Nearest-neighbour reduction keeping the top-left label of each
/// factor x factor block. Region count and ids are preserved.
inline DownsampledMask downsample_mask(const IndexedMask& mask, Index factor) {
  if (factor < 1 || (factor & (factor - 1)) != 0) throw ConfigError("mask downsampling factor must be a power of two");
  if (mask.height() % factor != 0 || mask.width() % factor != 0)
    throw ShapeError("mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                     " not divisible by " + std::to_string(factor));
  const Index h = mask.height() / factor, w = mask.width() / factor;
  std::vector<int> indices(static_cast<std::size_t>(h * w));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) indices[static_cast<std::size_t>(y * w + x)] = mask(y * factor, x * factor);
  DownsampledMask out{IndexedMask(h, w, std::move(indices), mask.region_count(), true), {}};
  for (int r = 0; r < mask.region_count(); ++r)
    if (mask.pixel_count(r) > 0 && out.mask.pixel_count(r) == 0) out.vanished.push_back(r);
  return out;
}

/// The mask tracked down to a layer of size height x width.
inline IndexedMask mask_for_layer(const IndexedMask& mask, Index height, Index width) {
  if (height <= 0 || width <= 0 || mask.height() % height != 0 || mask.width() % width != 0 ||
      mask.height() / height != mask.width() / width)
    throw ConfigError("mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                      " cannot be aligned with a " + std::to_string(height) + "x" + std::to_string(width) + " layer");
  return downsample_mask(mask, mask.height() / height).mask;
}

/// Columns of F listed in `pixels`, in that order.
template <typename Scalar>
RowMatrix<Scalar> gather_pixels(const RowMatrix<Scalar>& F, const std::vector<Index>& pixels) {
  RowMatrix<Scalar> out(F.rows(), static_cast<Index>(pixels.size()));
  for (Index f = 0; f < F.rows(); ++f) {
    const Scalar* src = F.row(f).data();
    Scalar* dst = out.row(f).data();
    for (std::size_t k = 0; k < pixels.size(); ++k) dst[k] = src[pixels[k]];
  }
  return out;
}

template <typename Scalar>
void scatter_pixels(const RowMatrix<Scalar>& values, const std::vector<Index>& pixels, RowMatrix<Scalar>& F) {
  for (Index f = 0; f < F.rows(); ++f) {
    const Scalar* src = values.row(f).data();
    Scalar* dst = F.row(f).data();
    for (std::size_t k = 0; k < pixels.size(); ++k) dst[pixels[k]] = src[k];
  }
}

/// Exemplar statistics per region and tag.
template <typename Scalar>
struct RegionStats {
  /// regions[r][tag]
  std::vector<std::map<std::string, LayerStatistics<Scalar>>> regions;

  int region_count() const { return static_cast<int>(regions.size()); }

  const LayerStatistics<Scalar>& at(int region, const std::string& tag) const {
    const auto& by_tag = regions.at(static_cast<std::size_t>(region));
    auto it = by_tag.find(tag);
    if (it == by_tag.end()) throw ConfigError("region statistics lack tag '" + tag + "'");
    return it->second;
  }
};

/// Collects the pixels of each region at each tagged layer (mask tracked to
/// the layer size) and builds that region's Gram matrix and histograms.
/// Regions with no pixels at a layer get empty statistics.
template <typename Scalar>
RegionStats<Scalar> build_region_stats(const ActivationSet<Scalar>& acts, const IndexedMask& mask,
                                       Index bins = kDefaultHistogramBins) {
  RegionStats<Scalar> stats;
  stats.regions.resize(static_cast<std::size_t>(mask.region_count()));
  for (const auto& [tag, act] : acts) {
    const IndexedMask layer_mask = mask_for_layer(mask, act.height(), act.width());
    const auto pixels = layer_mask.region_pixels();
    for (int r = 0; r < mask.region_count(); ++r)
      stats.regions[r].emplace(tag, layer_statistics(gather_pixels(act.features(), pixels[r]), bins));
  }
  return stats;
}

namespace detail {

inline void check_region_ids(const IndexedMask& out_mask, int style_regions) {
  if (out_mask.region_count() > style_regions)
    throw ConfigError("output mask uses " + std::to_string(out_mask.region_count()) +
                      " regions, style statistics have " + std::to_string(style_regions));
}

}  // namespace detail

/// Gram loss with the exemplar Gram matrix chosen by each output pixel's
/// region: sum over regions of gram_layer_loss on that region's pixels.
template <typename Scalar>
LayerLoss<Scalar> localized_gram_layer_loss(const Tensor<Scalar>& output, const IndexedMask& out_mask,
                                            const RegionStats<Scalar>& style, const std::string& tag, Scalar weight) {
  detail::check_region_ids(out_mask, style.region_count());
  const IndexedMask layer_mask = mask_for_layer(out_mask, output.height(), output.width());
  const auto pixels = layer_mask.region_pixels();
  LayerLoss<Scalar> out;
  out.grad = RowMatrix<Scalar>::Zero(output.channels(), output.pixels());
  for (int r = 0; r < layer_mask.region_count(); ++r) {
    const auto& target = style.at(r, tag);
    if (pixels[r].empty() || target.empty()) continue;
    auto region = gram_layer_loss(target.gram, gather_pixels(output.features(), pixels[r]), weight);
    out.value += region.value;
    scatter_pixels(region.grad, pixels[r], out.grad);
  }
  return out;
}

/// Histogram loss with matching done separately inside each region. The
/// squared remap error is normalized by the full layer size so region terms
/// add up to the global loss when there is one region.
template <typename Scalar>
LayerLoss<Scalar> localized_histogram_layer_loss(const Tensor<Scalar>& output, const IndexedMask& out_mask,
                                                 const RegionStats<Scalar>& style, const std::string& tag,
                                                 Scalar weight) {
  detail::check_region_ids(out_mask, style.region_count());
  const IndexedMask layer_mask = mask_for_layer(out_mask, output.height(), output.width());
  const auto pixels = layer_mask.region_pixels();
  // Pixels of regions without exemplar statistics remap to themselves.
  RowMatrix<Scalar> remapped = output.features();
  for (int r = 0; r < layer_mask.region_count(); ++r) {
    const auto& target = style.at(r, tag);
    if (pixels[r].empty() || target.empty()) continue;
    scatter_pixels(histogram_remap(gather_pixels(output.features(), pixels[r]), target.histograms), pixels[r],
                   remapped);
  }
  return histogram_layer_loss_frozen(output.features(), remapped, weight, Scalar(output.size()));
}

template <typename Scalar>
LossResult<Scalar> localized_gram_loss(const ActivationSet<Scalar>& output, const IndexedMask& out_mask,
                                       const RegionStats<Scalar>& style, const LayerWeights<Scalar>& weights) {
  LossResult<Scalar> result;
  for (const auto& [tag, weight] : weights) {
    if (weight == Scalar(0)) continue;
    const auto o = output.find(tag);
    if (o == output.end()) throw ConfigError("localized gram loss: tag '" + tag + "' missing");
    auto layer = localized_gram_layer_loss(o->second, out_mask, style, tag, weight);
    result.value += layer.value;
    result.grads.emplace(tag, Tensor<Scalar>(o->second.channels(), o->second.height(), o->second.width(),
                                             std::move(layer.grad)));
  }
  return result;
}

template <typename Scalar>
LossResult<Scalar> localized_histogram_loss(const ActivationSet<Scalar>& output, const IndexedMask& out_mask,
                                            const RegionStats<Scalar>& style, const LayerWeights<Scalar>& weights) {
  LossResult<Scalar> result;
  for (const auto& [tag, weight] : weights) {
    if (weight == Scalar(0)) continue;
    const auto o = output.find(tag);
    if (o == output.end()) throw ConfigError("localized histogram loss: tag '" + tag + "' missing");
    auto layer = localized_histogram_layer_loss(o->second, out_mask, style, tag, weight);
    result.value += layer.value;
    result.grads.emplace(tag, Tensor<Scalar>(o->second.channels(), o->second.height(), o->second.width(),
                                             std::move(layer.grad)));
  }
  return result;
}

}  // namespace histotex

#endif  // HISTOTEX_LOCALIZED_HPP_
