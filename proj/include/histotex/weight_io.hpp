#ifndef HISTOTEX_WEIGHT_IO_HPP_
#define HISTOTEX_WEIGHT_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "histotex/network.hpp"

namespace histotex {

/// Binary weight file, little-endian:
///
///   "HTXW" | version u32 | input mean 3 x f32 | layer count u32
///   per layer: kind u8 (0 conv, 1 rectifier, 2 average pool, 3 maximum pool)
///     conv: out, in, kh, kw as u32, weights f32 [out][in][kh][kw], biases f32 [out]
///   tag count u32, per tag: name length u8, name bytes, layer index u32
inline constexpr std::uint32_t kWeightFormatVersion = 1;

class WeightFormatError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, unexpected_eof, version_mismatch, inconsistent_dims, trailing_data };

  WeightFormatError(Kind kind, const std::string& detail);

  Kind kind() const { return kind_; }

  static const char* describe(Kind kind);

 private:
  Kind kind_;
};

/// Weights are stored as f32; serializing a double network rounds them.
std::vector<std::uint8_t> serialize_network(const Network<double>& net);
Network<double> parse_network(std::span<const std::uint8_t> bytes);

void save_network(const Network<double>& net, const std::filesystem::path& path);
Network<double> load_network(const std::filesystem::path& path);

}  // namespace histotex

#endif  // HISTOTEX_WEIGHT_IO_HPP_
