#ifndef HISTOTEX_FIXTURE_HPP_
#define HISTOTEX_FIXTURE_HPP_

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "histotex/network.hpp"

namespace histotex {

/// Reference activations written by the weight exporter:
///
///   {"format": "htx-fixture", "version": 1, "tolerance": 1e-4,
///    "image": T, "activations": {"relu1_1": T, ...}}
///
/// where T = {"channels": c, "height": h, "width": w, "data": [c*h*w values,
/// channel-major then row-major]}. Image values are in [0, 1] before the
/// network's mean subtraction.
struct ActivationFixture {
  Tensord image;
  ActivationSet<double> activations;
  double tolerance = 1e-4;
};

ActivationFixture parse_fixture(const nlohmann::json& j);
ActivationFixture load_fixture(const std::filesystem::path& path);
nlohmann::json fixture_to_json(const ActivationFixture& fixture);

/// Relative error (norm-wise) of the engine's activations per fixture tag.
std::map<std::string, double> cross_check(const Network<double>& net, const ActivationFixture& fixture);

}  // namespace histotex

#endif  // HISTOTEX_FIXTURE_HPP_
