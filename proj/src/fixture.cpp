#include "histotex/fixture.hpp"

#include <fstream>

namespace histotex {

namespace {

Tensord tensor_from_json(const nlohmann::json& j, const std::string& where) {
  const Index c = j.at("channels").get<Index>(), h = j.at("height").get<Index>(), w = j.at("width").get<Index>();
  const auto& data = j.at("data");
  if (c < 0 || h < 0 || w < 0 || !data.is_array() || Index(data.size()) != c * h * w)
    throw ConfigError("fixture " + where + ": data length does not match " + std::to_string(c) + "x" +
                      std::to_string(h) + "x" + std::to_string(w));
  Tensord t(c, h, w);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = data[std::size_t(i)].get<double>();
  return t;
}

nlohmann::json tensor_to_json(const Tensord& t) {
  std::vector<double> data(t.data(), t.data() + t.size());
  return {{"channels", t.channels()}, {"height", t.height()}, {"width", t.width()}, {"data", std::move(data)}};
}

}  // namespace

ActivationFixture parse_fixture(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "htx-fixture") throw ConfigError("not an htx-fixture document");
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported fixture version");
    ActivationFixture f;
    f.tolerance = j.value("tolerance", 1e-4);
    f.image = tensor_from_json(j.at("image"), "image");
    for (const auto& [tag, t] : j.at("activations").items()) f.activations.emplace(tag, tensor_from_json(t, tag));
    if (f.activations.empty()) throw ConfigError("fixture has no activations");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("fixture: ") + e.what());
  }
}

ActivationFixture load_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
  return parse_fixture(j);
}

nlohmann::json fixture_to_json(const ActivationFixture& f) {
  nlohmann::json acts = nlohmann::json::object();
  for (const auto& [tag, t] : f.activations) acts[tag] = tensor_to_json(t);
  return {{"format", "htx-fixture"},
          {"version", 1},
          {"tolerance", f.tolerance},
          {"image", tensor_to_json(f.image)},
          {"activations", std::move(acts)}};
}

std::map<std::string, double> cross_check(const Network<double>& net, const ActivationFixture& fixture) {
  TagSet tags;
  for (const auto& entry : fixture.activations) tags.insert(entry.first);
  const auto acts = forward(fixture.image, net, tags);
  std::map<std::string, double> errors;
  for (const auto& [tag, reference] : fixture.activations) {
    const auto& a = acts.at(tag);
    if (!a.same_shape(reference))
      throw ShapeError("fixture activations at '" + tag + "' are " + reference.shape_string() + ", engine's are " +
                       a.shape_string());
    errors[tag] = relative_error(a, reference);
  }
  return errors;
}

}  // namespace histotex
