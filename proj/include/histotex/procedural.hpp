#ifndef HISTOTEX_PROCEDURAL_HPP_
#define HISTOTEX_PROCEDURAL_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "histotex/tensor.hpp"

namespace histotex {

/// Tileable 3-channel exemplar: colored diagonal stripes over a darker
/// ground with seeded round spots. Periods divide 64, so any size that is a
/// multiple of 64 tiles seamlessly. Values in [0, 1].
inline Tensord procedural_exemplar(Index height, Index width, std::uint64_t seed = 0) {
  constexpr double kTwoPi = 2 * std::numbers::pi;
  const double ground[3] = {0.25, 0.18, 0.12};
  const double stripe[3] = {0.85, 0.55, 0.20};
  Tensord image(3, height, width);
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) {
      const double s = 0.5 + 0.5 * std::sin(kTwoPi * (double(x) / 16.0 + double(y) / 32.0));
      const double t = s * s * s;
      for (Index c = 0; c < 3; ++c) image(c, y, x) = ground[c] + (stripe[c] - ground[c]) * t;
    }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> row(0, height - 1), col(0, width - 1);
  const Index spots = std::max<Index>(1, height * width / 1024);
  for (Index k = 0; k < spots; ++k) {
    const Index cy = row(rng), cx = col(rng);
    for (Index dy = -3; dy <= 3; ++dy)
      for (Index dx = -3; dx <= 3; ++dx) {
        if (dy * dy + dx * dx > 9) continue;
        const Index y = ((cy + dy) % height + height) % height, x = ((cx + dx) % width + width) % width;
        image(0, y, x) = 0.15;
        image(1, y, x) = 0.45;
        image(2, y, x) = 0.75;
      }
  }
  return image;
}

}  // namespace histotex

#endif  // HISTOTEX_PROCEDURAL_HPP_
