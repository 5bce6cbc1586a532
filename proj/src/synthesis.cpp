#include "histotex/synthesis.hpp"

#include <cmath>
#include <random>
#include <set>

namespace histotex {

namespace {

using Json = nlohmann::json;

void check_weights(const LayerWeights<double>& weights, const char* field) {
  for (const auto& [tag, w] : weights)
    if (!(w >= 0) || !std::isfinite(w))
      throw ConfigError(std::string(field) + "['" + tag + "'] must be a finite value >= 0");
}

void add_enabled(TagSet& tags, const LayerWeights<double>& weights) {
  for (const auto& [tag, w] : weights)
    if (w != 0) tags.insert(tag);
}

TagSet style_tags(const SynthesisConfig& config) {
  TagSet tags;
  add_enabled(tags, config.gram_weights);
  add_enabled(tags, config.histogram_weights);
  add_enabled(tags, config.mean_activation_weights);
  return tags;
}

TagSet content_tags(const SynthesisConfig& config) {
  TagSet tags;
  add_enabled(tags, config.content_weights);
  return tags;
}

// Walks the layers the tags need and checks every pool sees even sizes and
// every convolution at least its kernel.
void check_image_size(const Network<double>& net, const TagSet& tags, Index height, Index width,
                      const std::string& what) {
  if (height < 1 || width < 1) throw ConfigError(what + " has an empty level");
  if (tags.empty()) return;
  std::size_t deepest = 0;
  for (const auto& tag : tags) deepest = std::max(deepest, net.layer_of(tag));
  Index h = height, w = width;
  for (std::size_t i = 0; i <= deepest; ++i) {
    if (std::holds_alternative<PoolLayer>(net.layers[i])) {
      if (h % 2 != 0 || w % 2 != 0)
        throw ConfigError(what + " level of " + std::to_string(width) + "x" + std::to_string(height) +
                          " pixels reaches an odd size at pooling layer " + std::to_string(i));
      h /= 2;
      w /= 2;
    } else if (const auto* conv = std::get_if<ConvLayer<double>>(&net.layers[i])) {
      if (h < conv->kernels.kernel_height || w < conv->kernels.kernel_width)
        throw ConfigError(what + " level of " + std::to_string(width) + "x" + std::to_string(height) +
                          " pixels is smaller than the kernel of layer " + std::to_string(i));
    }
  }
}

void check_pyramid(const Network<double>& net, const TagSet& tags, Index height, Index width, int levels,
                   const std::string& what) {
  const Index factor = Index(1) << (levels - 1);
  if (height % factor != 0 || width % factor != 0)
    throw ConfigError(what + " size " + std::to_string(width) + "x" + std::to_string(height) + " is not divisible by " +
                      std::to_string(factor) + " as " + std::to_string(levels) + " pyramid levels require");
  check_image_size(net, tags, height / factor, width / factor, what);
}

void check_mask_matches(const IndexedMask& mask, const Tensord& image, const std::string& what) {
  if (mask.height() != image.height() || mask.width() != image.width())
    throw ConfigError(what + " is " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                      ", its image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
}

Tensord wrap(const Tensord& like, RowMatrix<double> grad) {
  return Tensord(like.channels(), like.height(), like.width(), std::move(grad));
}

// Accumulates clamped terms in call order; the order is part of the result.
class TermAccumulator {
 public:
  TermAccumulator(const Tensord& output, const SynthesisConfig& config)
      : config_(config), gradient_(output.channels(), output.height(), output.width()) {}

  void add(TermKind kind, const std::string& tag, double value, const Tensord& image_grad) {
    TermReport t;
    t.kind = kind;
    t.tag = tag;
    t.value = value;
    t.threshold = config_.clamp_thresholds.of(kind);
    t.grad_norm_pre = image_grad.norm();
    if (config_.auto_tune) {
      const Tensord clamped = auto_tune_clamp(image_grad, t.threshold);
      t.grad_norm_post = clamped.norm();
      gradient_ += clamped;
    } else {
      t.grad_norm_post = t.grad_norm_pre;
      gradient_ += image_grad;
    }
    row_.total += value;
    row_.terms.push_back(std::move(t));
  }

  ObjectiveValue finish() {
    ObjectiveValue out;
    out.value = row_.total;
    out.gradient = std::move(gradient_);
    out.row = std::move(row_);
    return out;
  }

 private:
  const SynthesisConfig& config_;
  Tensord gradient_;
  ReportRow row_;
};

const LayerStatistics<double>& global_stats(const StyleStatistics& style, const std::string& tag) {
  auto it = style.global.find(tag);
  if (it == style.global.end()) throw ConfigError("no exemplar statistics for tag '" + tag + "'");
  return it->second;
}

ObjectiveValue evaluate_terms(const StyleStatistics& style, const ActivationSet<double>* content, const Tensord& output,
                              const Network<double>& net, const SynthesisConfig& config, const IndexedMask* out_mask) {
  if (out_mask) {
    if (!style.regions) throw ConfigError("output mask given but exemplar statistics are not per region");
    if (out_mask->height() != output.height() || out_mask->width() != output.width())
      throw ConfigError("output mask is " + std::to_string(out_mask->width()) + "x" +
                        std::to_string(out_mask->height()) + ", output is " + std::to_string(output.width()) + "x" +
                        std::to_string(output.height()));
  }
  const TagSet tags = config.active_tags(content != nullptr);
  ForwardTrace<double> trace;
  if (!tags.empty()) trace = trace_forward(output, net, tags);
  auto activation = [&](const std::string& tag) -> const Tensord& { return trace.outputs[net.layer_of(tag)]; };
  auto to_image = [&](const std::string& tag, const Tensord& act, RowMatrix<double> grad) {
    return backward(trace, net, ActivationSet<double>{{tag, wrap(act, std::move(grad))}});
  };

  TermAccumulator terms(output, config);
  for (const auto& [tag, w] : config.gram_weights) {
    if (w == 0) continue;
    const Tensord& act = activation(tag);
    LayerLoss<double> loss = out_mask ? localized_gram_layer_loss(act, *out_mask, *style.regions, tag, w)
                                      : gram_layer_loss(global_stats(style, tag).gram, act.features(), w);
    terms.add(TermKind::gram, tag, loss.value, to_image(tag, act, std::move(loss.grad)));
  }
  for (const auto& [tag, w] : config.histogram_weights) {
    if (w == 0) continue;
    const Tensord& act = activation(tag);
    LayerLoss<double> loss = out_mask ? localized_histogram_layer_loss(act, *out_mask, *style.regions, tag, w)
                                      : histogram_layer_loss(act.features(), global_stats(style, tag).histograms, w);
    terms.add(TermKind::histogram, tag, loss.value, to_image(tag, act, std::move(loss.grad)));
  }
  if (content) {
    for (const auto& [tag, w] : config.content_weights) {
      if (w == 0) continue;
      const auto c = content->find(tag);
      if (c == content->end()) throw ConfigError("no content activations for tag '" + tag + "'");
      const Tensord& act = activation(tag);
      if (!c->second.same_shape(act))
        throw ShapeError("content activations at '" + tag + "' are " + c->second.shape_string() + ", output's are " +
                         act.shape_string());
      LayerLoss<double> loss = content_layer_loss(c->second.features(), act.features(), w);
      terms.add(TermKind::content, tag, loss.value, to_image(tag, act, std::move(loss.grad)));
    }
  }
  for (const auto& [tag, w] : config.mean_activation_weights) {
    if (w == 0) continue;
    const Tensord& act = activation(tag);
    LayerLoss<double> loss = mean_activation_layer_loss(global_stats(style, tag).means, act.features(), w);
    terms.add(TermKind::mean_activation, tag, loss.value, to_image(tag, act, std::move(loss.grad)));
  }
  if (config.tv_weight != 0) {
    auto [value, grad] = tv_loss(output, config.tv_weight);
    terms.add(TermKind::tv, "", value, grad);
  }
  return terms.finish();
}

std::string dims_string(Index width, Index height) { return std::to_string(width) + "x" + std::to_string(height); }

}  // namespace

const char* term_kind_name(TermKind kind) {
  switch (kind) {
    case TermKind::gram: return "gram";
    case TermKind::histogram: return "histogram";
    case TermKind::content: return "content";
    case TermKind::mean_activation: return "mean_activation";
    case TermKind::tv: return "tv";
  }
  return "unknown";
}

double ClampThresholds::of(TermKind kind) const {
  switch (kind) {
    case TermKind::gram: return gram;
    case TermKind::histogram: return histogram;
    case TermKind::content: return content;
    case TermKind::mean_activation: return mean_activation;
    case TermKind::tv: return tv;
  }
  return 1;
}

void SynthesisConfig::validate() const {
  check_weights(gram_weights, "gram_weights");
  check_weights(histogram_weights, "histogram_weights");
  check_weights(content_weights, "content_weights");
  check_weights(mean_activation_weights, "mean_activation_weights");
  if (!(tv_weight >= 0) || !std::isfinite(tv_weight)) throw ConfigError("tv_weight must be a finite value >= 0");
  for (TermKind kind : {TermKind::gram, TermKind::histogram, TermKind::content, TermKind::mean_activation, TermKind::tv})
    if (!(clamp_thresholds.of(kind) > 0))
      throw ConfigError(std::string("clamp_thresholds.") + term_kind_name(kind) + " must be > 0");
  if (pyramid_levels < 1) throw ConfigError("pyramid_levels must be >= 1");
  if (pyramid_levels > 16) throw ConfigError("pyramid_levels must be <= 16");
  if (iterations < pyramid_levels) throw ConfigError("iterations must be >= pyramid_levels (one per level at least)");
  if (output_width < 0 || output_height < 0) throw ConfigError("output size must be non-negative");
  if ((output_width == 0) != (output_height == 0)) throw ConfigError("set both output_width and output_height or neither");
  if (!(step_size > 0)) throw ConfigError("step_size must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta1 and beta2 must be in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("epsilon must be > 0");
  if (histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
}

TagSet SynthesisConfig::active_tags(bool with_content) const {
  TagSet tags = style_tags(*this);
  if (with_content) add_enabled(tags, content_weights);
  return tags;
}

std::vector<int> SynthesisConfig::level_iterations() const {
  std::vector<int> per_level(static_cast<std::size_t>(pyramid_levels), iterations / pyramid_levels);
  per_level.back() += iterations % pyramid_levels;
  return per_level;
}

void to_json(nlohmann::json& j, const SynthesisConfig& c) {
  j = Json{{"gram_weights", c.gram_weights},
           {"histogram_weights", c.histogram_weights},
           {"content_weights", c.content_weights},
           {"mean_activation_weights", c.mean_activation_weights},
           {"tv_weight", c.tv_weight},
           {"clamp_thresholds",
            {{"gram", c.clamp_thresholds.gram},
             {"histogram", c.clamp_thresholds.histogram},
             {"content", c.clamp_thresholds.content},
             {"mean_activation", c.clamp_thresholds.mean_activation},
             {"tv", c.clamp_thresholds.tv}}},
           {"auto_tune", c.auto_tune},
           {"pyramid_levels", c.pyramid_levels},
           {"iterations", c.iterations},
           {"output_width", c.output_width},
           {"output_height", c.output_height},
           {"seed", c.seed},
           {"step_size", c.step_size},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon},
           {"histogram_bins", c.histogram_bins}};
}

void from_json(const nlohmann::json& j, SynthesisConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{
      "gram_weights", "histogram_weights", "content_weights", "mean_activation_weights", "tv_weight",
      "clamp_thresholds", "auto_tune", "pyramid_levels", "iterations", "output_width", "output_height", "seed",
      "step_size", "beta1", "beta2", "epsilon", "histogram_bins"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown config field '" + key + "'");
  try {
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    read("gram_weights", c.gram_weights);
    read("histogram_weights", c.histogram_weights);
    read("content_weights", c.content_weights);
    read("mean_activation_weights", c.mean_activation_weights);
    read("tv_weight", c.tv_weight);
    if (j.contains("clamp_thresholds")) {
      const auto& t = j.at("clamp_thresholds");
      if (!t.is_object()) throw ConfigError("clamp_thresholds must be an object");
      for (const auto& [key, value] : t.items()) {
        if (key == "gram") value.get_to(c.clamp_thresholds.gram);
        else if (key == "histogram") value.get_to(c.clamp_thresholds.histogram);
        else if (key == "content") value.get_to(c.clamp_thresholds.content);
        else if (key == "mean_activation") value.get_to(c.clamp_thresholds.mean_activation);
        else if (key == "tv") value.get_to(c.clamp_thresholds.tv);
        else throw ConfigError("unknown clamp threshold '" + key + "'");
      }
    }
    read("auto_tune", c.auto_tune);
    read("pyramid_levels", c.pyramid_levels);
    read("iterations", c.iterations);
    read("output_width", c.output_width);
    read("output_height", c.output_height);
    read("seed", c.seed);
    read("step_size", c.step_size);
    read("beta1", c.beta1);
    read("beta2", c.beta2);
    read("epsilon", c.epsilon);
    read("histogram_bins", c.histogram_bins);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

Tensord auto_tune_clamp(const Tensord& gradient, double threshold) {
  if (!(threshold > 0)) throw ConfigError("clamp threshold must be > 0");
  const double norm = gradient.norm();
  if (norm <= threshold) return gradient;
  Tensord out = gradient * (threshold / norm);
  // Rounding can leave the norm a few ulps above the threshold.
  for (int i = 0; i < 4 && out.norm() > threshold; ++i) out *= std::nextafter(1.0, 0.0);
  return out;
}

std::string TermReport::name() const {
  return tag.empty() ? std::string(term_kind_name(kind)) : std::string(term_kind_name(kind)) + ":" + tag;
}

nlohmann::json to_json(const ReportRow& row) {
  Json terms = Json::array();
  for (const auto& t : row.terms)
    terms.push_back({{"term", t.name()},
                     {"value", t.value},
                     {"threshold", t.threshold},
                     {"grad_norm_pre", t.grad_norm_pre},
                     {"grad_norm_post", t.grad_norm_post}});
  return {{"level", row.level}, {"iteration", row.iteration}, {"total", row.total}, {"terms", std::move(terms)}};
}

void LossReport::write_json_lines(std::ostream& out) const {
  for (const auto& row : rows) out << to_json(row).dump() << '\n';
}

StyleStatistics compute_style_statistics(const Tensord& image, const Network<double>& net, const TagSet& tags,
                                         Index bins, const IndexedMask* mask) {
  StyleStatistics stats;
  const ActivationSet<double> acts = forward(image, net, tags);
  for (const auto& [tag, act] : acts) stats.global.emplace(tag, layer_statistics(act.features(), bins));
  if (mask) {
    check_mask_matches(*mask, image, "style mask");
    stats.regions = build_region_stats(acts, *mask, bins);
  }
  return stats;
}

ObjectiveValue texture_objective(const StyleStatistics& style, const Tensord& output, const Network<double>& net,
                                 const SynthesisConfig& config, const IndexedMask* out_mask) {
  return evaluate_terms(style, nullptr, output, net, config, out_mask);
}

ObjectiveValue transfer_objective(const StyleStatistics& style, const ActivationSet<double>& content,
                                  const Tensord& output, const Network<double>& net, const SynthesisConfig& config,
                                  const IndexedMask* out_mask) {
  return evaluate_terms(style, &content, output, net, config, out_mask);
}

ObjectiveValue baseline_gram_objective(const ActivationSet<double>& source, const Tensord& output,
                                       const Network<double>& net, const LayerWeights<double>& weights,
                                       double threshold, bool auto_tune) {
  ObjectiveValue out;
  out.gradient = Tensord(output.channels(), output.height(), output.width());
  TagSet tags;
  add_enabled(tags, weights);
  const ActivationSet<double> acts = forward(output, net, tags);
  for (const auto& [tag, w] : weights) {
    if (w == 0) continue;
    const auto& o = acts.at(tag);
    const auto s = source.find(tag);
    if (s == source.end()) throw ConfigError("baseline gram objective: no exemplar activations for '" + tag + "'");
    auto loss = gram_layer_loss(gram(s->second), o.features(), w);
    Tensord g = backward_to_image(output, net, ActivationSet<double>{{tag, wrap(o, std::move(loss.grad))}});
    TermReport t{TermKind::gram, tag, loss.value, threshold, g.norm(), 0};
    if (auto_tune) g = auto_tune_clamp(g, threshold);
    t.grad_norm_post = g.norm();
    out.gradient += g;
    out.row.total += loss.value;
    out.row.terms.push_back(std::move(t));
  }
  out.value = out.row.total;
  return out;
}

AdamOptions adam_options(const SynthesisConfig& config) {
  return {config.step_size, config.beta1, config.beta2, config.epsilon};
}

Tensord optimize_level(const Tensord& init, const Objective& objective, int iterations, const AdamOptions& options,
                       int level, LossReport& report) {
  if (iterations < 1) throw ConfigError("optimize_level: iterations must be >= 1");
  Tensord x = init;
  Eigen::ArrayXd m = Eigen::ArrayXd::Zero(x.size());
  Eigen::ArrayXd v = Eigen::ArrayXd::Zero(x.size());
  double beta1_power = 1, beta2_power = 1;
  for (int t = 0; t < iterations; ++t) {
    ObjectiveValue step = objective(x);
    step.row.level = level;
    step.row.iteration = t;
    report.rows.push_back(std::move(step.row));
    if (!std::isfinite(step.value) || !step.gradient.all_finite())
      throw NumericalAbort("non-finite loss or gradient at level " + std::to_string(level) + ", iteration " +
                               std::to_string(t),
                           report);
    if (!step.gradient.same_shape(x)) throw ShapeError("objective gradient shape differs from the image");
    const auto g = step.gradient.flat().array();
    m = options.beta1 * m + (1 - options.beta1) * g;
    v = options.beta2 * v + (1 - options.beta2) * g.square();
    beta1_power *= options.beta1;
    beta2_power *= options.beta2;
    const Eigen::ArrayXd m_hat = m / (1 - beta1_power);
    const Eigen::ArrayXd v_hat = v / (1 - beta2_power);
    x.flat().array() -= options.step_size * m_hat / (v_hat.sqrt() + options.epsilon);
  }
  x.flat() = x.flat().cwiseMax(0.0).cwiseMin(1.0);
  return x;
}

Tensord white_noise(Index channels, Index height, Index width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensord::Uniform(channels, height, width, rng, 0.0, 1.0);
}

Tensord downsample_image(const Tensord& image, int times) {
  Tensord out = image;
  for (int i = 0; i < times; ++i) out = pool2(out, PoolMode::average);
  return out;
}

SynthesisResult synthesize_texture(const Tensord& source, const Network<double>& net, const SynthesisConfig& config) {
  config.validate();
  net.validate();
  if (source.channels() != net.input_channels())
    throw ConfigError("exemplar has " + std::to_string(source.channels()) + " channels, network expects " +
                      std::to_string(net.input_channels()));
  const Index height = config.output_height > 0 ? config.output_height : source.height();
  const Index width = config.output_width > 0 ? config.output_width : source.width();
  const int levels = config.pyramid_levels;
  const TagSet tags = style_tags(config);
  check_pyramid(net, tags, source.height(), source.width(), levels, "exemplar");
  check_pyramid(net, tags, height, width, levels, "output");

  const std::vector<int> budget = config.level_iterations();
  const AdamOptions adam = adam_options(config);
  SynthesisResult result;
  Tensord image;
  for (int level = 0; level < levels; ++level) {
    const int shrink = levels - 1 - level;
    const StyleStatistics style =
        compute_style_statistics(downsample_image(source, shrink), net, tags, config.histogram_bins);
    const Tensord init = level == 0 ? white_noise(source.channels(), height >> shrink, width >> shrink, config.seed)
                                    : upsample_bilinear2(image);
    const Objective objective = [&](const Tensord& x) { return texture_objective(style, x, net, config); };
    image = optimize_level(init, objective, budget[level], adam, level, result.report);
  }
  result.image = std::move(image);
  return result;
}

SynthesisResult style_transfer(const Tensord& content, const Tensord& style, const Network<double>& net,
                               const SynthesisConfig& config, const std::optional<TransferMasks>& masks) {
  config.validate();
  net.validate();
  for (const Tensord* image : {&content, &style})
    if (image->channels() != net.input_channels())
      throw ConfigError("input image has " + std::to_string(image->channels()) + " channels, network expects " +
                        std::to_string(net.input_channels()));
  if (config.output_width > 0 && (config.output_width != content.width() || config.output_height != content.height()))
    throw ConfigError("style transfer output is the content size " + dims_string(content.width(), content.height()) +
                      ", config asks for " + dims_string(config.output_width, config.output_height));
  const int levels = config.pyramid_levels;
  const TagSet s_tags = style_tags(config);
  const TagSet c_tags = content_tags(config);
  check_pyramid(net, config.active_tags(true), content.height(), content.width(), levels, "content");
  check_pyramid(net, s_tags, style.height(), style.width(), levels, "style");
  if (masks) {
    check_mask_matches(masks->style, style, "style mask");
    check_mask_matches(masks->output, content, "output mask");
    if (masks->output.region_count() > masks->style.region_count())
      throw ConfigError("output mask has " + std::to_string(masks->output.region_count()) +
                        " regions, style mask has " + std::to_string(masks->style.region_count()));
  }

  const std::vector<int> budget = config.level_iterations();
  const AdamOptions adam = adam_options(config);
  SynthesisResult result;
  Tensord image;
  for (int level = 0; level < levels; ++level) {
    const int shrink = levels - 1 - level;
    const Index factor = Index(1) << shrink;
    std::optional<IndexedMask> style_mask, out_mask;
    if (masks) {
      auto s = downsample_mask(masks->style, factor);
      auto o = downsample_mask(masks->output, factor);
      for (int r : s.vanished)
        result.report.warnings.push_back("level " + std::to_string(level) + ": style region " + std::to_string(r) +
                                         " has no pixels");
      for (int r : o.vanished)
        result.report.warnings.push_back("level " + std::to_string(level) + ": output region " + std::to_string(r) +
                                         " has no pixels");
      style_mask = std::move(s.mask);
      out_mask = std::move(o.mask);
    }
    const StyleStatistics style_stats = compute_style_statistics(
        downsample_image(style, shrink), net, s_tags, config.histogram_bins, style_mask ? &*style_mask : nullptr);
    const ActivationSet<double> content_acts = forward(downsample_image(content, shrink), net, c_tags);
    const Tensord init = level == 0 ? white_noise(content.channels(), content.height() >> shrink,
                                                  content.width() >> shrink, config.seed)
                                    : upsample_bilinear2(image);
    const IndexedMask* mask_ptr = out_mask ? &*out_mask : nullptr;
    const Objective objective = [&](const Tensord& x) {
      return transfer_objective(style_stats, content_acts, x, net, config, mask_ptr);
    };
    image = optimize_level(init, objective, budget[level], adam, level, result.report);
  }
  result.image = std::move(image);
  return result;
}

bool HistogramDiagnostics::bound_holds() const {
  for (Index f = 0; f < delta.size(); ++f)
    if (!(mean_deviation[f] <= std::sqrt(delta[f]) + bin_width[f])) return false;
  return true;
}

double HistogramDiagnostics::average_mean_deviation() const {
  return mean_deviation.size() > 0 ? mean_deviation.mean() : 0.0;
}

HistogramDiagnostics histogram_diagnostics(const Tensord& output, const Tensord& exemplar, const Network<double>& net,
                                           const std::string& tag, Index bins) {
  const TagSet tags{tag};
  const RowMatrix<double> O = forward(output, net, tags).at(tag).features();
  const RowMatrix<double> S = forward(exemplar, net, tags).at(tag).features();
  const HistogramTargets<double> targets = histogram_targets(S, bins);
  const RowMatrix<double> R = histogram_remap(O, targets);
  HistogramDiagnostics d;
  d.delta = remap_errors(O, R);
  d.bin_width.resize(O.rows());
  d.mean_deviation = (feature_means(O) - feature_means(S)).cwiseAbs();
  for (Index f = 0; f < O.rows(); ++f) {
    const double lo = std::min(O.row(f).minCoeff(), targets.min(f));
    const double hi = std::max(O.row(f).maxCoeff(), targets.max(f));
    d.bin_width[f] = (hi - lo) / double(bins);
  }
  return d;
}

}  // namespace histotex
