#ifndef HISTOTEX_IO_HPP_
#define HISTOTEX_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "histotex/localized.hpp"
#include "histotex/tensor.hpp"

namespace histotex {

/// 8-bit PNG to a 3 x H x W tensor in [0, 1]. Gray, palette and 16-bit
/// inputs are expanded; alpha is dropped.
Tensord read_png_rgb(const std::filesystem::path& path);

/// Single-channel 8-bit PNG (palette and low-bit gray are expanded).
GrayMask read_png_gray(const std::filesystem::path& path);

/// Rounds clamp(v, 0, 1) * 255; the tensor must have 3 channels.
void write_png_rgb(const std::filesystem::path& path, const Tensord& image);

/// 8-bit single-channel PNG (masks).
void write_png_gray(const std::filesystem::path& path, const GrayMask& mask);

std::vector<std::uint8_t> quantize_rgb(const Tensord& image);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace histotex

#endif  // HISTOTEX_IO_HPP_
