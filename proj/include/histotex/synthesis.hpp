#ifndef HISTOTEX_SYNTHESIS_HPP_
#define HISTOTEX_SYNTHESIS_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histotex/localized.hpp"
#include "histotex/network.hpp"
#include "histotex/statistics.hpp"

// Orchestration is double precision only.

namespace histotex {

/// Loss families. Each (kind, tag) pair is one clamped term; TV has no tag.
enum class TermKind { gram, histogram, content, mean_activation, tv };

const char* term_kind_name(TermKind kind);

struct ClampThresholds {
  double gram = 100;
  double histogram = 1;
  double content = 1;
  double mean_activation = 1;
  double tv = 1;

  double of(TermKind kind) const;
};

/// Default weights are one uniform scale, 1e5, for every term. Clamping
/// only acts on gradients longer than the threshold; at this scale the raw
/// per-term gradients of a white-noise start on the desk-scale network
/// reach their thresholds, as they do for a full-size pretrained network
/// with unit weights.
inline constexpr double kDefaultLossWeight = 1e5;

struct SynthesisConfig {
  LayerWeights<double> gram_weights{{"relu1_1", kDefaultLossWeight},
                                    {"relu2_1", kDefaultLossWeight},
                                    {"relu3_1", kDefaultLossWeight},
                                    {"relu4_1", kDefaultLossWeight}};
  LayerWeights<double> histogram_weights{{"relu1_1", kDefaultLossWeight}, {"relu4_1", kDefaultLossWeight}};
  /// Used by style transfer only.
  LayerWeights<double> content_weights{{"relu4_1", kDefaultLossWeight}};
  LayerWeights<double> mean_activation_weights{};
  double tv_weight = kDefaultLossWeight;
  ClampThresholds clamp_thresholds{};
  /// Off: weights are used as given, gradients are never rescaled.
  bool auto_tune = true;
  int pyramid_levels = 3;
  /// Total budget over all levels; the finest level takes the remainder.
  int iterations = 700;
  /// 0 means the size of the exemplar (texture) or content image (transfer).
  Index output_width = 0;
  Index output_height = 0;
  std::uint64_t seed = 0;
  double step_size = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index histogram_bins = kDefaultHistogramBins;

  /// Throws ConfigError on negative weights, zero budgets and the like.
  void validate() const;

  /// Every tag any enabled term reads.
  TagSet active_tags(bool with_content) const;

  /// Iterations of each level, coarsest first.
  std::vector<int> level_iterations() const;
};

void to_json(nlohmann::json& j, const SynthesisConfig& config);
/// Missing fields keep their defaults; unknown fields are rejected.
void from_json(const nlohmann::json& j, SynthesisConfig& config);

/// If ||g|| <= threshold, g unchanged; else g scaled to norm exactly threshold.
Tensord auto_tune_clamp(const Tensord& gradient, double threshold);

struct TermReport {
  TermKind kind = TermKind::gram;
  std::string tag;  // empty for TV
  double value = 0;
  double threshold = 0;
  double grad_norm_pre = 0;
  double grad_norm_post = 0;

  std::string name() const;
};

struct ReportRow {
  int level = 0;
  int iteration = 0;  // within the level
  double total = 0;
  std::vector<TermReport> terms;
};

struct LossReport {
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;

  /// One JSON object per row.
  void write_json_lines(std::ostream& out) const;
};

nlohmann::json to_json(const ReportRow& row);

struct ObjectiveValue {
  double value = 0;
  Tensord gradient;
  ReportRow row;
};

using Objective = std::function<ObjectiveValue(const Tensord&)>;

/// Exemplar statistics of one pyramid level, global and optionally per region.
struct StyleStatistics {
  std::map<std::string, LayerStatistics<double>> global;
  std::optional<RegionStats<double>> regions;
};

/// Statistics at `tags` of `image`; with `mask`, per-region statistics too.
StyleStatistics compute_style_statistics(const Tensord& image, const Network<double>& net, const TagSet& tags,
                                         Index bins, const IndexedMask* mask = nullptr);

/// Gram + histogram + mean-activation + TV, each (kind, tag) term clamped in
/// image space before summation. With `out_mask` the Gram and histogram
/// terms use the per-region statistics.
ObjectiveValue texture_objective(const StyleStatistics& style, const Tensord& output, const Network<double>& net,
                                 const SynthesisConfig& config, const IndexedMask* out_mask = nullptr);

/// texture_objective terms plus the content term against `content`.
ObjectiveValue transfer_objective(const StyleStatistics& style, const ActivationSet<double>& content,
                                  const Tensord& output, const Network<double>& net, const SynthesisConfig& config,
                                  const IndexedMask* out_mask = nullptr);

/// Gram-only objective of prior work, written without the histogram, TV or
/// mask machinery. Serves as the reference for the gamma = omega = 0 reduction.
ObjectiveValue baseline_gram_objective(const ActivationSet<double>& source, const Tensord& output,
                                       const Network<double>& net, const LayerWeights<double>& weights,
                                       double threshold, bool auto_tune);

struct AdamOptions {
  double step_size = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamOptions adam_options(const SynthesisConfig& config);

/// Raised when an objective returns a non-finite value or gradient. Carries
/// the rows recorded up to and including the failing iteration.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(const std::string& what, LossReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const LossReport& report() const { return report_; }

 private:
  LossReport report_;
};

/// Adam on the image with fresh moment estimates; values are clamped to
/// [0, 1] after the final iteration only. Appends one row per iteration.
Tensord optimize_level(const Tensord& init, const Objective& objective, int iterations, const AdamOptions& options,
                       int level, LossReport& report);

/// Uniform [0, 1) noise per channel from mt19937_64(seed).
Tensord white_noise(Index channels, Index height, Index width, std::uint64_t seed);

/// 2x2 average pooling applied `times` times.
Tensord downsample_image(const Tensord& image, int times);

struct SynthesisResult {
  Tensord image;
  LossReport report;
};

struct TransferMasks {
  IndexedMask style;
  IndexedMask output;
};

SynthesisResult synthesize_texture(const Tensord& source, const Network<double>& net, const SynthesisConfig& config);

/// With masks, the style mask must match the style image and the output mask
/// the content image.
SynthesisResult style_transfer(const Tensord& content, const Tensord& style, const Network<double>& net,
                               const SynthesisConfig& config, const std::optional<TransferMasks>& masks = {});

/// Per-feature comparison of an output against an exemplar at one tag, using
/// the union-range remap the histogram loss uses.
struct HistogramDiagnostics {
  /// ||O_f - R_f||^2 / n, the normalized histogram loss of feature f.
  Vector<double> delta;
  Vector<double> bin_width;
  /// |mean(O_f) - mean(S_f)|
  Vector<double> mean_deviation;

  /// mean_deviation_f <= sqrt(delta_f) + bin_width_f for every f.
  bool bound_holds() const;
  double average_mean_deviation() const;
};

HistogramDiagnostics histogram_diagnostics(const Tensord& output, const Tensord& exemplar, const Network<double>& net,
                                           const std::string& tag, Index bins = kDefaultHistogramBins);

}  // namespace histotex

#endif  // HISTOTEX_SYNTHESIS_HPP_
