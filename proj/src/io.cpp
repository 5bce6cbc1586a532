#include "histotex/io.hpp"

#include <png.h>

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

namespace histotex {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = message;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

struct Decoded {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;  // interleaved, 8 bits
};

// rgb: expand to 3 channels; otherwise require and keep a single gray channel.
Decoded decode(const std::filesystem::path& path, bool rgb) {
  File file = open_file(path, "rb");
  std::uint8_t signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0)
    throw IoError("'" + path.string() + "' is not a PNG file");
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + path.string() + "': " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  const bool has_color = (color & PNG_COLOR_MASK_COLOR) != 0;
  if (!rgb && has_color) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + path.string() + "' is not a grayscale PNG");
  }
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (rgb && !has_color) png_set_gray_to_rgb(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  if (out.channels != (rgb ? 3 : 1)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + path.string() + "': unexpected channel layout");
  }
  out.pixels.resize(std::size_t(out.width) * out.height * out.channels);
  rows.resize(out.height);
  for (png_uint_32 y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + std::size_t(y) * out.width * out.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

Tensord read_png_rgb(const std::filesystem::path& path) {
  const Decoded d = decode(path, true);
  Tensord image(3, d.height, d.width);
  const Index pixels = image.pixels();
  for (Index p = 0; p < pixels; ++p)
    for (Index c = 0; c < 3; ++c) image.features()(c, p) = d.pixels[std::size_t(p * 3 + c)] / 255.0;
  return image;
}

GrayMask read_png_gray(const std::filesystem::path& path) {
  Decoded d = decode(path, false);
  return {Index(d.height), Index(d.width), std::move(d.pixels)};
}

std::vector<std::uint8_t> quantize_rgb(const Tensord& image) {
  if (image.channels() != 3) throw ShapeError("RGB output needs 3 channels, image has " + std::to_string(image.channels()));
  std::vector<std::uint8_t> bytes(std::size_t(image.size()));
  for (Index p = 0; p < image.pixels(); ++p)
    for (Index c = 0; c < 3; ++c) {
      const double v = std::clamp(image.features()(c, p), 0.0, 1.0);
      bytes[std::size_t(p * 3 + c)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return bytes;
}

namespace {

void write_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes, Index height, Index width,
               int color_type, Index channels) {
  File file = open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("'" + path.string() + "': " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < height; ++y)
    rows[std::size_t(y)] = const_cast<png_bytep>(bytes.data()) + std::size_t(y * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, const Tensord& image) {
  write_png(path, quantize_rgb(image), image.height(), image.width(), PNG_COLOR_TYPE_RGB, 3);
}

void write_png_gray(const std::filesystem::path& path, const GrayMask& mask) {
  if (Index(mask.levels.size()) != mask.height * mask.width) throw ShapeError("gray image size mismatch");
  write_png(path, mask.levels, mask.height, mask.width, PNG_COLOR_TYPE_GRAY, 1);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 15]);
  }
  return hex;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read of '" + path.string() + "' failed");
  return bytes;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace histotex
