// histotex command-line front end.
//
//   histotex texture  --source s.png --out o.png [--size 256x256] [--seed 7]
//   histotex transfer --content c.png --style s.png --out o.png [--style-mask a.png --out-mask b.png]
//   histotex gram-lab --dims 1,2,4,8,16 --instances 100 --seed 1 [--out report.json] [--fig3] [--long]
//   histotex selfcheck [--json]
//
// Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 numerical abort,
// 5 selfcheck failure. Every written image or report gets a sibling
// <name>.manifest.json; `--from-manifest` replays one bit-identically.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "histotex/errors.hpp"
#include "histotex/gram_analysis.hpp"
#include "histotex/gram_experiment.hpp"
#include "histotex/io.hpp"
#include "histotex/localized.hpp"
#include "histotex/network.hpp"
#include "histotex/parallel.hpp"
#include "histotex/selfcheck.hpp"
#include "histotex/synthesis.hpp"
#include "histotex/weight_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace histotex;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitSelfcheck = 5;

// Largest gram-lab dimension allowed without --long.
constexpr int kShortSuiteMaxDim = 16;

class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& what, std::string usage) : std::runtime_error(what), usage_(std::move(usage)) {}
  const std::string& usage() const { return usage_; }

 private:
  std::string usage_;
};

// Flags shared by texture and transfer.
struct RunFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string weights;
  std::optional<std::uint64_t> backend_seed;
  std::string report;
  std::optional<int> iterations;
  std::optional<int> pyramid_levels;
  std::string out;
  std::string from_manifest;
};

struct TextureFlags {
  RunFlags run;
  std::string source;
  std::string size;
};

struct TransferFlags {
  RunFlags run;
  std::string content;
  std::string style;
  std::string style_mask;
  std::string out_mask;
};

struct GramLabFlags {
  std::vector<int> dims{1, 2, 4, 8, 16};
  int instances = 100;
  std::uint64_t seed = 1;
  bool long_suite = false;
  bool fig3 = false;
  std::string out;
};

struct SelfcheckFlags {
  bool json = false;
  std::uint64_t seed = 1;
  std::string inject_fault;
};

void add_run_flags(CLI::App& cmd, RunFlags& f) {
  cmd.add_option("--config", f.config_path, "JSON file with SynthesisConfig fields; flags override it");
  cmd.add_option("--seed", f.seed, "white-noise seed");
  cmd.add_option("--weights", f.weights, "weight file (default: seeded random filter bank)");
  cmd.add_option("--backend-seed", f.backend_seed, "random filter bank seed when --weights is omitted (default 0)");
  cmd.add_option("--report", f.report, "write the per-iteration loss report as JSON lines");
  cmd.add_option("--iterations", f.iterations, "total iteration budget across pyramid levels");
  cmd.add_option("--pyramid-levels", f.pyramid_levels, "number of coarse-to-fine levels");
  cmd.add_option("--out", f.out, "output PNG");
  cmd.add_option("--from-manifest", f.from_manifest, "replay a manifest written by an earlier run");
}

json read_json_file(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

fs::path manifest_path(const fs::path& out) {
  fs::path p = out;
  return p.replace_extension(".manifest.json");
}

json input_record(const fs::path& path) {
  return {{"path", fs::absolute(path).lexically_normal().string()}, {"sha256", sha256_file(path)}};
}

// Re-hashes an input named by a manifest; a changed file cannot reproduce.
fs::path verified_input(const json& record, const std::string& role) {
  const fs::path path = record.at("path").get<std::string>();
  const std::string expected = record.at("sha256").get<std::string>();
  const std::string actual = sha256_file(path);
  if (actual != expected)
    throw IoError(role + " " + path.string() + " changed since the manifest was written (sha256 " + actual +
                  ", manifest " + expected + ")");
  return path;
}

struct Backend {
  Network<double> net;
  json record;
};

Backend make_backend(const std::string& weights, std::optional<std::uint64_t> backend_seed) {
  if (!weights.empty()) {
    if (backend_seed) throw ConfigError("--backend-seed applies only without --weights");
    return {load_network(weights), {{"kind", "weights"}, {"file", input_record(weights)}}};
  }
  const std::uint64_t seed = backend_seed.value_or(0);
  const std::vector<Index> topology = default_topology();
  return {random_filter_bank<double>(seed, topology),
          {{"kind", "random_filter_bank"}, {"seed", seed}, {"topology", topology}}};
}

Backend replay_backend(const json& record) {
  const std::string kind = record.at("kind").get<std::string>();
  if (kind == "weights") return {load_network(verified_input(record.at("file"), "weight file")), record};
  if (kind == "random_filter_bank")
    return {random_filter_bank<double>(record.at("seed").get<std::uint64_t>(),
                                       record.at("topology").get<std::vector<Index>>()),
            record};
  throw ConfigError("manifest backend kind '" + kind + "' is unknown");
}

SynthesisConfig resolve_config(const RunFlags& f) {
  SynthesisConfig config;
  if (!f.config_path.empty()) config = read_json_file(f.config_path).get<SynthesisConfig>();
  if (f.seed) config.seed = *f.seed;
  if (f.iterations) config.iterations = *f.iterations;
  if (f.pyramid_levels) config.pyramid_levels = *f.pyramid_levels;
  return config;
}

std::pair<Index, Index> parse_size(const std::string& text) {
  std::istringstream in(text);
  long width = 0, height = 0;
  char x = 0;
  if (!(in >> width >> x >> height) || (x != 'x' && x != 'X') || !in.eof() || width <= 0 || height <= 0)
    throw ConfigError("--size expects WIDTHxHEIGHT, got '" + text + "'");
  return {width, height};
}

// Replay accepts only the output paths; everything else comes from the manifest.
void reject_with_manifest(const CLI::App& cmd, const std::vector<std::string>& run_defining) {
  for (const auto& name : run_defining)
    if (cmd.count(name) > 0) throw UsageError(name + " conflicts with --from-manifest", cmd.help());
}

json load_manifest(const fs::path& path, const std::string& command) {
  json manifest = read_json_file(path);
  if (manifest.value("command", "") != command)
    throw ConfigError(path.string() + " is a '" + manifest.value("command", "?") + "' manifest, not '" + command +
                      "'");
  return manifest;
}

void write_report(const std::string& path, const LossReport& report) {
  if (path.empty()) return;
  std::ostringstream lines;
  report.write_json_lines(lines);
  write_text_file(path, lines.str());
}

void print_warnings(const LossReport& report) {
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
}

// Writes image, report and manifest; prints the output digest.
void finish_run(const RunFlags& f, json manifest, const SynthesisResult& result) {
  print_warnings(result.report);
  write_png_rgb(f.out, result.image);
  write_report(f.report, result.report);
  const std::string digest = sha256_file(f.out);
  manifest["output"] = {{"path", fs::absolute(f.out).lexically_normal().string()}, {"sha256", digest}};
  write_text_file(manifest_path(f.out), manifest.dump(2) + "\n");
  std::cout << f.out << " sha256 " << digest << '\n';
}

json manifest_skeleton(const std::string& command, const SynthesisConfig& config, const json& inputs,
                       const json& backend) {
  return {{"tool", "histotex"},
          {"version", HISTOTEX_VERSION},
          {"command", command},
          {"config", config},
          {"seed", config.seed},
          {"inputs", inputs},
          {"backend", backend}};
}

int cmd_texture(const CLI::App& cmd, const TextureFlags& flags) {
  const RunFlags& f = flags.run;
  if (f.out.empty()) throw UsageError("--out is required", cmd.help());
  SynthesisConfig config;
  Backend backend;
  fs::path source;
  if (!f.from_manifest.empty()) {
    reject_with_manifest(cmd, {"--config", "--seed", "--weights", "--backend-seed", "--iterations",
                               "--pyramid-levels", "--source", "--size"});
    const json manifest = load_manifest(f.from_manifest, "texture");
    config = manifest.at("config").get<SynthesisConfig>();
    source = verified_input(manifest.at("inputs").at("source"), "source");
    backend = replay_backend(manifest.at("backend"));
  } else {
    if (flags.source.empty()) throw UsageError("--source is required", cmd.help());
    config = resolve_config(f);
    if (!flags.size.empty()) std::tie(config.output_width, config.output_height) = parse_size(flags.size);
    source = flags.source;
    backend = make_backend(f.weights, f.backend_seed);
  }
  const Tensord exemplar = read_png_rgb(source);
  if (config.output_width == 0) {
    config.output_width = exemplar.width();
    config.output_height = exemplar.height();
  }
  config.validate();
  const json inputs = {{"source", input_record(source)}};
  try {
    const SynthesisResult result = synthesize_texture(exemplar, backend.net, config);
    finish_run(f, manifest_skeleton("texture", config, inputs, backend.record), result);
  } catch (const NumericalAbort& e) {
    write_report(f.report, e.report());
    throw;
  }
  return 0;
}

int cmd_transfer(const CLI::App& cmd, const TransferFlags& flags) {
  const RunFlags& f = flags.run;
  if (f.out.empty()) throw UsageError("--out is required", cmd.help());
  SynthesisConfig config;
  Backend backend;
  fs::path content_path, style_path, style_mask_path, out_mask_path;
  if (!f.from_manifest.empty()) {
    reject_with_manifest(cmd, {"--config", "--seed", "--weights", "--backend-seed", "--iterations",
                               "--pyramid-levels", "--content", "--style", "--style-mask", "--out-mask"});
    const json manifest = load_manifest(f.from_manifest, "transfer");
    config = manifest.at("config").get<SynthesisConfig>();
    const json& inputs = manifest.at("inputs");
    content_path = verified_input(inputs.at("content"), "content");
    style_path = verified_input(inputs.at("style"), "style");
    if (inputs.contains("style_mask")) {
      style_mask_path = verified_input(inputs.at("style_mask"), "style mask");
      out_mask_path = verified_input(inputs.at("out_mask"), "output mask");
    }
    backend = replay_backend(manifest.at("backend"));
  } else {
    if (flags.content.empty() || flags.style.empty()) throw UsageError("--content and --style are required", cmd.help());
    if (flags.style_mask.empty() != flags.out_mask.empty())
      throw UsageError("--style-mask and --out-mask must be given together", cmd.help());
    config = resolve_config(f);
    content_path = flags.content;
    style_path = flags.style;
    style_mask_path = flags.style_mask;
    out_mask_path = flags.out_mask;
    backend = make_backend(f.weights, f.backend_seed);
  }
  const Tensord content = read_png_rgb(content_path);
  const Tensord style = read_png_rgb(style_path);
  std::optional<TransferMasks> masks;
  json inputs = {{"content", input_record(content_path)}, {"style", input_record(style_path)}};
  if (!style_mask_path.empty()) {
    auto [style_mask, out_mask] = paired_masks_from_gray_levels(read_png_gray(style_mask_path),
                                                                read_png_gray(out_mask_path));
    masks = TransferMasks{std::move(style_mask), std::move(out_mask)};
    inputs["style_mask"] = input_record(style_mask_path);
    inputs["out_mask"] = input_record(out_mask_path);
  }
  config.output_width = content.width();
  config.output_height = content.height();
  config.validate();
  try {
    const SynthesisResult result = style_transfer(content, style, backend.net, config, masks);
    finish_run(f, manifest_skeleton("transfer", config, inputs, backend.record), result);
  } catch (const NumericalAbort& e) {
    write_report(f.report, e.report());
    throw;
  }
  return 0;
}

void print_fig3_pair() {
  // One feature, constant 1/sqrt2, against a feature with standard deviation
  // 1/2: the mean that keeps E[x^2] fixed. Extended precision rounds to 1/2.
  const long double mu1 = 1 / std::sqrt(2.0L);
  const long double sigma2 = 0.5L;
  const double mu2 = static_cast<double>(matched_mean_for_target_variance<long double>(mu1, 0.0L, sigma2));
  std::cout << std::setprecision(17) << "map 1: mean " << static_cast<double>(mu1)
            << " sd 0 second moment " << static_cast<double>(mu1 * mu1) << '\n'
            << "map 2: mean " << mu2 << " sd " << static_cast<double>(sigma2) << " second moment "
            << mu2 * mu2 + static_cast<double>(sigma2 * sigma2) << '\n';
}

int cmd_gram_lab(const CLI::App& cmd, const GramLabFlags& flags) {
  if (flags.fig3) {
    print_fig3_pair();
    if (cmd.count("--dims") == 0 && cmd.count("--instances") == 0) return 0;
  }
  for (int m : flags.dims) {
    if (m < 1) throw UsageError("--dims entries must be positive, got " + std::to_string(m), cmd.help());
    if (m > kShortSuiteMaxDim && !flags.long_suite)
      throw UsageError("dimension " + std::to_string(m) + " needs --long", cmd.help());
  }
  if (flags.instances < 1) throw UsageError("--instances must be positive", cmd.help());

  const AffineSolverOptions options;
  const auto records = run_gram_experiment(flags.dims, flags.instances, flags.seed, options);
  const json report = gram_report(records, flags.seed, options);

  std::map<int, std::pair<int, int>> solved;  // m -> (residual < 1e-6, certified infeasible)
  for (const auto& r : records) {
    auto& [ok, infeasible] = solved[r.m];
    ok += r.residual < 1e-6;
    infeasible += r.certified_infeasible;
  }
  for (const auto& [m, counts] : solved)
    std::cerr << "m=" << m << ": " << counts.first << "/" << flags.instances << " solved, " << counts.second
              << " certified infeasible\n";

  if (flags.out.empty()) {
    std::cout << report.dump(2) << '\n';
    return 0;
  }
  write_text_file(flags.out, report.dump(2) + "\n");
  const json manifest = {{"tool", "histotex"},
                         {"version", HISTOTEX_VERSION},
                         {"command", "gram-lab"},
                         {"dims", flags.dims},
                         {"instances", flags.instances},
                         {"seed", flags.seed},
                         {"output", {{"path", fs::absolute(flags.out).lexically_normal().string()},
                                     {"sha256", sha256_file(flags.out)}}}};
  write_text_file(manifest_path(flags.out), manifest.dump(2) + "\n");
  return 0;
}

int cmd_selfcheck(const SelfcheckFlags& flags) {
  SelfcheckOptions options;
  options.seed = flags.seed;
  options.inject_fault = flags.inject_fault;
  const auto results = run_selfcheck(options);
  bool all = true;
  for (const auto& r : results) all = all && r.passed;
  if (flags.json) {
    std::cout << to_json(results).dump(2) << '\n';
  } else {
    for (const auto& r : results)
      std::cout << std::left << std::setw(36) << r.name << " max_error " << std::setw(12) << std::setprecision(4)
                << r.max_error << " tolerance " << std::setw(10) << r.tolerance << " cases " << std::setw(4)
                << r.cases << (r.passed ? " PASS" : " FAIL") << '\n';
  }
  return all ? 0 : kExitSelfcheck;
}

}  // namespace

int main(int argc, char** argv) {
  tune_process_allocator();

  CLI::App app{"Neural texture synthesis and style transfer with Gram and histogram losses"};
  app.set_version_flag("--version", HISTOTEX_VERSION);
  app.require_subcommand(1);

  TextureFlags texture;
  CLI::App* texture_cmd = app.add_subcommand("texture", "synthesize a texture from an exemplar");
  add_run_flags(*texture_cmd, texture.run);
  texture_cmd->add_option("--source", texture.source, "exemplar PNG");
  texture_cmd->add_option("--size", texture.size, "output size WIDTHxHEIGHT (default: exemplar size)");

  TransferFlags transfer;
  CLI::App* transfer_cmd = app.add_subcommand("transfer", "render a content image in the style of another");
  add_run_flags(*transfer_cmd, transfer.run);
  transfer_cmd->add_option("--content", transfer.content, "content PNG (sets the output size)");
  transfer_cmd->add_option("--style", transfer.style, "style PNG");
  transfer_cmd->add_option("--style-mask", transfer.style_mask, "gray-level region mask of the style image");
  transfer_cmd->add_option("--out-mask", transfer.out_mask, "gray-level region mask of the output");

  GramLabFlags gram_lab;
  CLI::App* gram_cmd = app.add_subcommand("gram-lab", "equal-Gram distribution experiments");
  gram_cmd->add_option("--dims", gram_lab.dims, "feature dimensions, comma separated")->delimiter(',');
  gram_cmd->add_option("--instances", gram_lab.instances, "random instances per dimension");
  gram_cmd->add_option("--seed", gram_lab.seed, "base seed");
  gram_cmd->add_flag("--long", gram_lab.long_suite, "allow dimensions above 16");
  gram_cmd->add_flag("--fig3", gram_lab.fig3, "print the one-feature closed-form pair");
  gram_cmd->add_option("--out", gram_lab.out, "report JSON (default: stdout)");

  SelfcheckFlags selfcheck;
  CLI::App* selfcheck_cmd = app.add_subcommand("selfcheck", "finite-difference and histogram oracle checks");
  selfcheck_cmd->add_flag("--json", selfcheck.json, "machine-readable results");
  selfcheck_cmd->add_option("--seed", selfcheck.seed, "fixture seed");
  selfcheck_cmd->add_option("--inject-fault", selfcheck.inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*texture_cmd) return cmd_texture(*texture_cmd, texture);
    if (*transfer_cmd) return cmd_transfer(*transfer_cmd, transfer);
    if (*gram_cmd) return cmd_gram_lab(*gram_cmd, gram_lab);
    return cmd_selfcheck(selfcheck);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << e.usage();
    return kExitUsage;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const WeightFormatError& e) {
    std::cerr << "weight file: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kExitUsage;
  }
}
