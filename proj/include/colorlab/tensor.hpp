#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace colorlab {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A batch of feature maps stored channel-major: row c holds channel c of
/// every sample, laid out as (n, y, x) with x fastest.  Convolutions become a
/// single GEMM against an im2col matrix with the same column order, and
/// channel concatenation is a vertical stack.
template <typename Scalar>
struct Tensor {
  RowMatrix<Scalar> data;
  Index batch = 0;
  Index height = 0;
  Index width = 0;

  Tensor() = default;
  Tensor(Index channels, Index batch_, Index height_, Index width_)
      : data(RowMatrix<Scalar>::Zero(channels, batch_ * height_ * width_)),
        batch(batch_), height(height_), width(width_) {}

  Index channels() const { return data.rows(); }
  Index plane_size() const { return height * width; }
  Index columns() const { return batch * height * width; }

  Scalar& at(Index c, Index n, Index y, Index x) { return data(c, (n * height + y) * width + x); }
  Scalar at(Index c, Index n, Index y, Index x) const { return data(c, (n * height + y) * width + x); }

  /// H×W view of one channel of one sample.
  Eigen::Map<RowMatrix<Scalar>> plane(Index c, Index n) {
    return {data.row(c).data() + n * plane_size(), height, width};
  }
  Eigen::Map<const RowMatrix<Scalar>> plane(Index c, Index n) const {
    return {data.row(c).data() + n * plane_size(), height, width};
  }

  bool same_shape(const Tensor& o) const {
    return channels() == o.channels() && batch == o.batch && height == o.height && width == o.width;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> t;
    t.data = data.template cast<Other>();
    t.batch = batch;
    t.height = height;
    t.width = width;
    return t;
  }

  std::string shape_string() const {
    return std::to_string(channels()) + "x" + std::to_string(batch) + "x" + std::to_string(height) +
           "x" + std::to_string(width);
  }
};

/// out_size × in_size linear interpolation operator with half-pixel centers
/// and edge clamping (the align_corners=false convention).
template <typename Scalar>
RowMatrix<Scalar> bilinear_matrix(Index in_size, Index out_size) {
  RowMatrix<Scalar> m = RowMatrix<Scalar>::Zero(out_size, in_size);
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (Index o = 0; o < out_size; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    Index i0 = static_cast<Index>(src);
    if (i0 > in_size - 1) i0 = in_size - 1;
    const Index i1 = i0 + 1 < in_size ? i0 + 1 : i0;
    const double frac = src - static_cast<double>(i0);
    m(o, i0) += static_cast<Scalar>(1.0 - frac);
    m(o, i1) += static_cast<Scalar>(frac);
  }
  return m;
}

/// Stack channels of `a` over channels of `b`.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.batch != b.batch || a.height != b.height || a.width != b.width)
    throw std::invalid_argument("concat_channels: spatial mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  Tensor<Scalar> out;
  out.batch = a.batch;
  out.height = a.height;
  out.width = a.width;
  out.data.resize(a.channels() + b.channels(), a.columns());
  out.data.topRows(a.channels()) = a.data;
  out.data.bottomRows(b.channels()) = b.data;
  return out;
}

template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& t, Index first, Index count) {
  Tensor<Scalar> out;
  out.batch = t.batch;
  out.height = t.height;
  out.width = t.width;
  out.data = t.data.middleRows(first, count);
  return out;
}

}  // namespace colorlab
