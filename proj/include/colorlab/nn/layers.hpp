#pragma once

#include "colorlab/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace colorlab::nn {

enum class Mode { Train, Eval };

/// Learnable tensor with its accumulated gradient.
template <typename Scalar>
struct Param {
  std::string name;
  RowMatrix<Scalar> value;
  RowMatrix<Scalar> grad;

  void reset(Index rows, Index cols) {
    value = RowMatrix<Scalar>::Zero(rows, cols);
    grad = RowMatrix<Scalar>::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

/// Non-learned state that still belongs in a checkpoint (batch-norm stats).
template <typename Scalar>
struct Buffer {
  std::string name;
  RowMatrix<Scalar>* value;
};

struct ConvGeometry {
  Index kernel = 3;
  Index stride = 1;
  Index padding = 1;
  Index dilation = 1;

  Index conv_out(Index in) const { return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1; }
  Index transposed_out(Index in) const { return (in - 1) * stride - 2 * padding + dilation * (kernel - 1) + 1; }
};

/// Unfolds `image` into a (C·k·k) × (N·out_h·out_w) matrix of receptive fields.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& image, const ConvGeometry& g, Index out_h, Index out_w);

/// Adjoint of im2col: scatters-and-adds `cols` into `image` (whose shape is kept).
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const ConvGeometry& g, Index out_h, Index out_w, Tensor<Scalar>& image);

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, Index in_channels, Index out_channels, ConvGeometry geometry, bool bias = true);

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode);
  Tensor<Scalar> backward(const Tensor<Scalar>& dy);

  void collect(std::vector<Param<Scalar>*>& params);
  void init_uniform(std::mt19937_64& rng);
  void init_normal(std::mt19937_64& rng, Scalar stddev);

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }
  const ConvGeometry& geometry() const { return geom_; }

  Param<Scalar> weight;  // out × (in·k·k)
  Param<Scalar> bias;    // out × 1 (empty when disabled)

 private:
  bool pointwise() const;

  Index in_ = 0, out_ = 0;
  ConvGeometry geom_;
  bool has_bias_ = true;
  Tensor<Scalar> input_;
};

template <typename Scalar>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, Index in_channels, Index out_channels, ConvGeometry geometry, bool bias = true);

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode);
  Tensor<Scalar> backward(const Tensor<Scalar>& dy);

  void collect(std::vector<Param<Scalar>*>& params);
  void init_uniform(std::mt19937_64& rng);
  void init_normal(std::mt19937_64& rng, Scalar stddev);
  /// Each output channel copies its own input channel (requires in == out).
  void init_identity();

  Param<Scalar> weight;  // in × (out·k·k)
  Param<Scalar> bias;

 private:
  Index in_ = 0, out_ = 0;
  ConvGeometry geom_;
  bool has_bias_ = true;
  Tensor<Scalar> input_;
};

template <typename Scalar>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, Index channels, Scalar momentum = Scalar(0.1), Scalar eps = Scalar(1e-5));

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode);
  Tensor<Scalar> backward(const Tensor<Scalar>& dy);

  void collect(std::vector<Param<Scalar>*>& params);
  void collect_buffers(std::vector<Buffer<Scalar>>& buffers);
  void init_normal(std::mt19937_64& rng, Scalar stddev);

  Param<Scalar> gamma;
  Param<Scalar> beta;
  RowMatrix<Scalar> running_mean;
  RowMatrix<Scalar> running_var;

 private:
  std::string name_;
  Scalar momentum_ = Scalar(0.1), eps_ = Scalar(1e-5);
  RowMatrix<Scalar> normalized_;
  Vector<Scalar> inv_std_;
};

template <typename Scalar>
class LeakyReLU {
 public:
  explicit LeakyReLU(Scalar slope = Scalar(0)) : slope_(slope) {}
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode);
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) const;

 private:
  Scalar slope_;
  RowMatrix<Scalar> input_;
};

template <typename Scalar>
using ReLU = LeakyReLU<Scalar>;

template <typename Scalar>
class Tanh {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode);
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) const;

 private:
  RowMatrix<Scalar> output_;
};

/// Integer-factor bilinear upsampling (align_corners=false).
template <typename Scalar>
class BilinearUpsample {
 public:
  explicit BilinearUpsample(Index factor = 1) : factor_(factor) {}
  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode);
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) const;

 private:
  Index factor_;
  Index in_h_ = 0, in_w_ = 0;
};

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

}  // namespace colorlab::nn
