#ifndef HISTOTEX_NUMERICS_HPP_
#define HISTOTEX_NUMERICS_HPP_

#include <algorithm>
#include <functional>
#include <string>

#include "histotex/parallel.hpp"
#include "histotex/tensor.hpp"

namespace histotex {

enum class PoolMode { average, maximum };

namespace detail {

// Pixels per GEMM tile. Fixed so results never depend on the worker count.
inline constexpr Index kConvTile = 1024;

// Copies n wrapped samples src[(x0 + k) mod w], k = 0..n-1, into dst.
template <typename Scalar>
void copy_wrapped(const Scalar* src, Index w, Index x0, Index n, Scalar* dst) {
  x0 = x0 < 0 ? x0 + w : (x0 >= w ? x0 - w : x0);
  while (n > 0) {
    const Index run = std::min(n, w - x0);
    std::copy(src + x0, src + x0 + run, dst);
    dst += run;
    n -= run;
    x0 = 0;
  }
}

// Correlates x with k over pixels [begin, end) of the output, wrap-around
// indexing, writing into out's columns. Bias optional.
template <typename Scalar>
void correlate_tile(const Tensor<Scalar>& x, const RowMatrix<Scalar>& weights, Index kh, Index kw,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* bias, Index begin, Index end,
                    Tensor<Scalar>& out) {
  const Index h = x.height(), w = x.width(), cin = x.channels();
  const Index ry = kh / 2, rx = kw / 2;
  const Index count = end - begin;
  thread_local RowMatrix<Scalar> columns;
  columns.resize(cin * kh * kw, count);
  for (Index c = 0; c < cin; ++c) {
    const Scalar* channel = x.features().row(c).data();
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx) {
        Scalar* row = columns.row((c * kh + ky) * kw + kx).data();
        for (Index p = begin; p < end;) {
          const Index y = p / w, x0 = p % w;
          const Index n = std::min(end - p, w - x0);
          Index sy = y + ky - ry;
          sy = sy < 0 ? sy + h : (sy >= h ? sy - h : sy);
          copy_wrapped(channel + sy * w, w, x0 + kx - rx, n, row + (p - begin));
          p += n;
        }
      }
    }
  }
  auto block = out.features().middleCols(begin, count);
  block.noalias() = weights * columns;
  if (bias) block.colwise() += *bias;
}

template <typename Scalar>
Tensor<Scalar> correlate(const Tensor<Scalar>& x, const RowMatrix<Scalar>& weights, Index out_channels, Index kh,
                         Index kw, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* bias) {
  Tensor<Scalar> out(out_channels, x.height(), x.width());
  const Index pixels = x.pixels();
  const Index tiles = (pixels + kConvTile - 1) / kConvTile;
  parallel_for(static_cast<std::size_t>(tiles), [&](std::size_t t) {
    const Index begin = static_cast<Index>(t) * kConvTile;
    correlate_tile(x, weights, kh, kw, bias, begin, std::min(pixels, begin + kConvTile), out);
  });
  return out;
}

inline Index wrap_index(Index i, Index n) { return ((i % n) + n) % n; }

}  // namespace detail

/// Circular 2-D cross-correlation (no kernel flip), same-size output:
/// out(o, y, x) = bias(o) + sum_{c, ky, kx} w(o, c, ky, kx) * in(c, y + ky - kh/2, x + kx - kw/2)
/// with indices taken modulo the image size.
template <typename Scalar>
Tensor<Scalar> conv2d_circular(const Tensor<Scalar>& x, const FilterKernels<Scalar>& k) {
  if (x.channels() != k.in_channels)
    throw ShapeError("conv2d_circular: input has " + std::to_string(x.channels()) + " channels, kernels expect " +
                     std::to_string(k.in_channels));
  if (x.height() < k.kernel_height || x.width() < k.kernel_width)
    throw ShapeError("conv2d_circular: input " + x.shape_string() + " smaller than kernel");
  return detail::correlate(x, k.weights, k.out_channels, k.kernel_height, k.kernel_width, &k.bias);
}

/// Kernels of the adjoint map: transposed channels, spatially flipped, no bias.
template <typename Scalar>
RowMatrix<Scalar> adjoint_weights(const FilterKernels<Scalar>& k) {
  const Index kh = k.kernel_height, kw = k.kernel_width;
  RowMatrix<Scalar> flipped(k.in_channels, k.out_channels * kh * kw);
  for (Index o = 0; o < k.out_channels; ++o)
    for (Index i = 0; i < k.in_channels; ++i)
      for (Index ky = 0; ky < kh; ++ky)
        for (Index kx = 0; kx < kw; ++kx)
          flipped(i, (o * kh + (kh - 1 - ky)) * kw + (kw - 1 - kx)) = k.weight(o, i, ky, kx);
  return flipped;
}

/// dLoss/dx of conv2d_circular given dLoss/dout. The map is linear in x, so
/// the result does not depend on x beyond its shape.
template <typename Scalar>
Tensor<Scalar> conv2d_circular_backward(const Tensor<Scalar>& x, const FilterKernels<Scalar>& k,
                                        const Tensor<Scalar>& upstream) {
  if (x.channels() != k.in_channels) throw ShapeError("conv2d_circular_backward: input channel mismatch");
  if (upstream.channels() != k.out_channels || upstream.height() != x.height() || upstream.width() != x.width())
    throw ShapeError("conv2d_circular_backward: upstream " + upstream.shape_string() + " does not match output shape");
  return detail::correlate(upstream, adjoint_weights(k), k.in_channels, k.kernel_height, k.kernel_width,
                           static_cast<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>*>(nullptr));
}

template <typename Scalar>
Tensor<Scalar> rectify(const Tensor<Scalar>& x) {
  Tensor<Scalar> out = x;
  out.features() = x.features().cwiseMax(Scalar(0));
  return out;
}

/// Passes upstream where the input was strictly positive; zero elsewhere
/// (subgradient 0 at exactly 0).
template <typename Scalar>
Tensor<Scalar> rectify_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& upstream) {
  if (!x.same_shape(upstream)) throw ShapeError("rectify_backward: shape mismatch");
  Tensor<Scalar> out = upstream;
  out.features() = (x.features().array() > Scalar(0)).select(upstream.features(), Scalar(0));
  return out;
}

/// 2x2 non-overlapping pooling.
template <typename Scalar>
Tensor<Scalar> pool2(const Tensor<Scalar>& x, PoolMode mode = PoolMode::average) {
  if (x.height() % 2 != 0 || x.width() % 2 != 0) throw ShapeError("pool2: odd spatial size " + x.shape_string());
  const Index h = x.height() / 2, w = x.width() / 2;
  Tensor<Scalar> out(x.channels(), h, w);
  for (Index c = 0; c < x.channels(); ++c) {
    for (Index y = 0; y < h; ++y) {
      for (Index xx = 0; xx < w; ++xx) {
        const Scalar a = x(c, 2 * y, 2 * xx), b = x(c, 2 * y, 2 * xx + 1);
        const Scalar d = x(c, 2 * y + 1, 2 * xx), e = x(c, 2 * y + 1, 2 * xx + 1);
        out(c, y, xx) = mode == PoolMode::average ? (a + b + d + e) / Scalar(4) : std::max({a, b, d, e});
      }
    }
  }
  return out;
}

/// For maximum pooling the whole upstream value goes to the first maximal
/// element of each window in row-major order.
template <typename Scalar>
Tensor<Scalar> pool2_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& upstream, PoolMode mode = PoolMode::average) {
  if (x.height() % 2 != 0 || x.width() % 2 != 0) throw ShapeError("pool2_backward: odd spatial size");
  if (upstream.channels() != x.channels() || upstream.height() * 2 != x.height() || upstream.width() * 2 != x.width())
    throw ShapeError("pool2_backward: upstream " + upstream.shape_string() + " does not match pooled shape");
  Tensor<Scalar> out(x.channels(), x.height(), x.width());
  for (Index c = 0; c < x.channels(); ++c) {
    for (Index y = 0; y < upstream.height(); ++y) {
      for (Index xx = 0; xx < upstream.width(); ++xx) {
        const Scalar g = upstream(c, y, xx);
        if (mode == PoolMode::average) {
          const Scalar q = g / Scalar(4);
          out(c, 2 * y, 2 * xx) = q;
          out(c, 2 * y, 2 * xx + 1) = q;
          out(c, 2 * y + 1, 2 * xx) = q;
          out(c, 2 * y + 1, 2 * xx + 1) = q;
        } else {
          Index by = 2 * y, bx = 2 * xx;
          for (Index dy = 0; dy < 2; ++dy)
            for (Index dx = 0; dx < 2; ++dx)
              if (x(c, 2 * y + dy, 2 * xx + dx) > x(c, by, bx)) {
                by = 2 * y + dy;
                bx = 2 * xx + dx;
              }
          out(c, by, bx) = g;
        }
      }
    }
  }
  return out;
}

/// Doubles the spatial size by bilinear interpolation at half-pixel centers,
/// wrapping at the borders (the image domain is a torus). Output sample 2i
/// sits at source coordinate i - 1/4, sample 2i + 1 at i + 1/4.
template <typename Scalar>
Tensor<Scalar> upsample_bilinear2(const Tensor<Scalar>& x) {
  const Index h = x.height(), w = x.width();
  Tensor<Scalar> out(x.channels(), 2 * h, 2 * w);
  if (h == 0 || w == 0) return out;
  auto taps = [](Index o, Index n, Index& near, Index& far, Scalar& far_weight) {
    near = o / 2;
    far = detail::wrap_index(o % 2 == 0 ? near - 1 : near + 1, n);
    far_weight = Scalar(0.25);
  };
  for (Index c = 0; c < x.channels(); ++c) {
    for (Index oy = 0; oy < 2 * h; ++oy) {
      Index y0, y1;
      Scalar fy;
      taps(oy, h, y0, y1, fy);
      for (Index ox = 0; ox < 2 * w; ++ox) {
        Index x0, x1;
        Scalar fx;
        taps(ox, w, x0, x1, fx);
        out(c, oy, ox) = (1 - fy) * ((1 - fx) * x(c, y0, x0) + fx * x(c, y0, x1)) +
                         fy * ((1 - fx) * x(c, y1, x0) + fx * x(c, y1, x1));
      }
    }
  }
  return out;
}

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per element.
template <typename Scalar>
Tensor<Scalar> finite_diff_gradient(const std::function<Scalar(const Tensor<Scalar>&)>& f, const Tensor<Scalar>& x,
                                    Scalar eps) {
  if (!(eps > 0)) throw ConfigError("finite_diff_gradient: eps must be positive");
  Tensor<Scalar> grad(x.channels(), x.height(), x.width());
  Tensor<Scalar> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar saved = probe.data()[i];
    probe.data()[i] = saved + eps;
    const Scalar plus = f(probe);
    probe.data()[i] = saved - eps;
    const Scalar minus = f(probe);
    probe.data()[i] = saved;
    grad.data()[i] = (plus - minus) / (2 * eps);
  }
  return grad;
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
template <typename Scalar>
Scalar relative_error(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Scalar scale = std::max(a.norm(), b.norm());
  if (scale == Scalar(0)) return Scalar(0);
  return (a - b).norm() / scale;
}

}  // namespace histotex

#endif  // HISTOTEX_NUMERICS_HPP_
