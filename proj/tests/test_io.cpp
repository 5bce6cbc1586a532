#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "histotex/fixture.hpp"
#include "histotex/io.hpp"

using namespace histotex;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("histotex_io_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

Tensord quantized_image(Index h, Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> level(0, 255);
  Tensord t(3, h, w);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = level(rng) / 255.0;
  return t;
}

}  // namespace

TEST_CASE("RGB PNG round trip is exact for 8-bit values") {
  TempDir dir;
  const Tensord image = quantized_image(7, 11, 1);
  write_png_rgb(dir.path / "a.png", image);
  const Tensord back = read_png_rgb(dir.path / "a.png");
  CHECK(back.height() == 7);
  CHECK(back.width() == 11);
  CHECK(back == image);
  CHECK(quantize_rgb(back) == quantize_rgb(image));
}

TEST_CASE("quantize_rgb clamps and rounds") {
  Tensord t(3, 1, 1);
  t(0, 0, 0) = -0.5;
  t(1, 0, 0) = 1.7;
  t(2, 0, 0) = 0.5;
  CHECK(quantize_rgb(t) == std::vector<std::uint8_t>{0, 255, 128});
  CHECK_THROWS_AS(quantize_rgb(Tensord(1, 2, 2)), ShapeError);
}

TEST_CASE("gray PNGs: masks read back, color rejected as a mask, expanded as RGB") {
  TempDir dir;
  const GrayMask mask{2, 3, {0, 40, 40, 255, 0, 7}};
  write_png_gray(dir.path / "m.png", mask);
  const GrayMask back = read_png_gray(dir.path / "m.png");
  CHECK(back.height == 2);
  CHECK(back.width == 3);
  CHECK(back.levels == mask.levels);

  const Tensord as_rgb = read_png_rgb(dir.path / "m.png");
  CHECK(as_rgb(0, 0, 1) == 40 / 255.0);
  CHECK(as_rgb(2, 0, 1) == 40 / 255.0);

  write_png_rgb(dir.path / "c.png", quantized_image(2, 2, 2));
  CHECK_THROWS_AS(read_png_gray(dir.path / "c.png"), IoError);
}

TEST_CASE("unreadable inputs are I/O errors") {
  TempDir dir;
  CHECK_THROWS_AS(read_png_rgb(dir.path / "missing.png"), IoError);
  std::ofstream(dir.path / "junk.png") << "not a png at all";
  CHECK_THROWS_AS(read_png_rgb(dir.path / "junk.png"), IoError);
  CHECK_THROWS_AS(write_png_rgb(dir.path / "no" / "dir.png", quantized_image(2, 2, 3)), IoError);
  CHECK_THROWS_AS(read_file(dir.path / "missing.bin"), IoError);
}

TEST_CASE("sha256 digests") {
  const std::string abc = "abc";
  CHECK(sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size())) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  TempDir dir;
  std::ofstream(dir.path / "abc.txt", std::ios::binary) << abc;
  CHECK(sha256_file(dir.path / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("activation fixture: JSON round trip and cross-check") {
  const auto net = random_filter_bank<double>(4, default_topology());
  ActivationFixture f;
  f.image = quantized_image(32, 32, 5);
  f.activations = forward(f.image, net, {"relu1_1", "relu2_1", "relu3_1", "relu4_1"});
  const auto j = fixture_to_json(f);
  const auto back = parse_fixture(nlohmann::json::parse(j.dump()));
  CHECK(back.image == f.image);
  CHECK(back.tolerance == 1e-4);
  CHECK(back.activations.size() == 4);
  for (const auto& [tag, err] : cross_check(net, back)) CHECK(err < 1e-12);

  const auto other = random_filter_bank<double>(5, default_topology());
  CHECK(cross_check(other, back).at("relu1_1") > 1e-2);

  TempDir dir;
  std::ofstream(dir.path / "fx.json") << j.dump();
  CHECK(load_fixture(dir.path / "fx.json").activations.at("relu4_1") == f.activations.at("relu4_1"));

  auto bad = j;
  bad["format"] = "other";
  CHECK_THROWS_AS(parse_fixture(bad), ConfigError);
  bad = j;
  bad["image"]["data"].erase(0);
  CHECK_THROWS_AS(parse_fixture(bad), ConfigError);
  bad = j;
  bad.erase("activations");
  CHECK_THROWS_AS(parse_fixture(bad), ConfigError);
  bad = j;
  bad["activations"]["relu1_1"]["height"] = 16;
  bad["activations"]["relu1_1"]["width"] = 64;
  CHECK_THROWS_AS(cross_check(net, parse_fixture(bad)), ShapeError);
  CHECK_THROWS_AS(load_fixture(dir.path / "none.json"), IoError);
}
