#ifndef HISTOTEX_TENSOR_HPP_
#define HISTOTEX_TENSOR_HPP_

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <string>

#include "histotex/errors.hpp"

namespace histotex {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense channels x height x width array.
///
/// Storage is a row-major (channels) x (height * width) matrix: row c is the
/// flattened feature map of channel c, which is exactly the N_l x n feature
/// matrix used by the Gram statistics.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Storage = RowMatrix<Scalar>;

  Tensor() = default;

  Tensor(Index channels, Index height, Index width)
      : height_(height), width_(width), data_(Storage::Zero(channels, height * width)) {
    if (channels < 0 || height < 0 || width < 0) throw ShapeError("negative tensor dimension");
  }

  Tensor(Index channels, Index height, Index width, Storage data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.rows() != channels || data_.cols() != height * width)
      throw ShapeError("tensor data does not match its shape");
  }

  static Tensor Zero(Index channels, Index height, Index width) { return Tensor(channels, height, width); }

  static Tensor Constant(Index channels, Index height, Index width, Scalar value) {
    Tensor t(channels, height, width);
    t.data_.setConstant(value);
    return t;
  }

  /// Independent uniform samples on [lo, hi).
  template <typename Rng>
  static Tensor Uniform(Index channels, Index height, Index width, Rng& rng, Scalar lo = 0, Scalar hi = 1) {
    std::uniform_real_distribution<Scalar> dist(lo, hi);
    Tensor t(channels, height, width);
    for (Index i = 0; i < t.size(); ++i) t.data_.data()[i] = dist(rng);
    return t;
  }

  Index channels() const { return data_.rows(); }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index pixels() const { return height_ * width_; }
  Index size() const { return data_.size(); }

  bool same_shape(const Tensor& other) const {
    return channels() == other.channels() && height_ == other.height_ && width_ == other.width_;
  }

  std::string shape_string() const {
    return std::to_string(channels()) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
  }

  Scalar& operator()(Index c, Index y, Index x) { return data_(c, y * width_ + x); }
  Scalar operator()(Index c, Index y, Index x) const { return data_(c, y * width_ + x); }

  /// Feature matrix view (channels x pixels).
  Storage& features() { return data_; }
  const Storage& features() const { return data_; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> flat() { return {data_.data(), data_.size()}; }
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> flat() const { return {data_.data(), data_.size()}; }

  Scalar squared_norm() const { return data_.squaredNorm(); }
  Scalar norm() const { return data_.norm(); }
  bool all_finite() const { return data_.allFinite(); }

  template <typename NewScalar>
  Tensor<NewScalar> cast() const {
    return Tensor<NewScalar>(channels(), height_, width_, data_.template cast<NewScalar>());
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    data_ += other.data_;
    return *this;
  }
  Tensor& operator-=(const Tensor& other) {
    require_same_shape(other, "-=");
    data_ -= other.data_;
    return *this;
  }
  Tensor& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, Scalar s) { return a *= s; }
  friend Tensor operator*(Scalar s, Tensor a) { return a *= s; }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.same_shape(b) && a.data_ == b.data_; }

 private:
  void require_same_shape(const Tensor& other, const char* op) const {
    if (!same_shape(other)) throw ShapeError(std::string("tensor ") + op + ": " + shape_string() + " vs " + other.shape_string());
  }

  Index height_ = 0;
  Index width_ = 0;
  Storage data_;
};

template <typename Scalar>
Scalar dot(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!a.same_shape(b)) throw ShapeError("dot: " + a.shape_string() + " vs " + b.shape_string());
  return a.flat().dot(b.flat());
}

/// Wrap-around translation: out(c, y, x) = in(c, y - dy, x - dx).
template <typename Scalar>
Tensor<Scalar> cyclic_shift(const Tensor<Scalar>& in, Index dy, Index dx) {
  const Index h = in.height(), w = in.width();
  Tensor<Scalar> out(in.channels(), h, w);
  if (h == 0 || w == 0) return out;
  const Index sy = ((dy % h) + h) % h, sx = ((dx % w) + w) % w;
  for (Index c = 0; c < in.channels(); ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) out(c, (y + sy) % h, (x + sx) % w) = in(c, y, x);
  return out;
}

/// Convolution filter bank: out_channels x (in_channels * kh * kw) weights,
/// each row one filter in [in][kh][kw] order, plus one bias per output.
template <typename Scalar>
struct FilterKernels {
  Index out_channels = 0;
  Index in_channels = 0;
  Index kernel_height = 0;
  Index kernel_width = 0;
  RowMatrix<Scalar> weights;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bias;

  FilterKernels() = default;

  FilterKernels(Index out, Index in, Index kh, Index kw)
      : out_channels(out),
        in_channels(in),
        kernel_height(kh),
        kernel_width(kw),
        weights(RowMatrix<Scalar>::Zero(out, in * kh * kw)),
        bias(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(out)) {
    validate();
  }

  void validate() const {
    if (out_channels <= 0 || in_channels <= 0 || kernel_height <= 0 || kernel_width <= 0)
      throw ShapeError("filter dimensions must be positive");
    if (kernel_height % 2 == 0 || kernel_width % 2 == 0) throw ShapeError("filter spatial dimensions must be odd");
    if (weights.rows() != out_channels || weights.cols() != in_channels * kernel_height * kernel_width ||
        bias.size() != out_channels)
      throw ShapeError("filter storage does not match its dimensions");
  }

  Scalar& weight(Index o, Index i, Index ky, Index kx) {
    return weights(o, (i * kernel_height + ky) * kernel_width + kx);
  }
  Scalar weight(Index o, Index i, Index ky, Index kx) const {
    return weights(o, (i * kernel_height + ky) * kernel_width + kx);
  }

  /// 1x1 identity bank on `channels` channels.
  static FilterKernels Identity(Index channels) {
    FilterKernels k(channels, channels, 1, 1);
    k.weights.setIdentity();
    return k;
  }

  friend bool operator==(const FilterKernels& a, const FilterKernels& b) {
    return a.out_channels == b.out_channels && a.in_channels == b.in_channels &&
           a.kernel_height == b.kernel_height && a.kernel_width == b.kernel_width && a.weights == b.weights &&
           a.bias == b.bias;
  }
};

using Tensord = Tensor<double>;
using Tensorf = Tensor<float>;

}  // namespace histotex

#endif  // HISTOTEX_TENSOR_HPP_
