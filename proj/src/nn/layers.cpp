#include "colorlab/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace colorlab::nn {

template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& image, const ConvGeometry& g, Index out_h, Index out_w) {
  const Index channels = image.channels(), k = g.kernel;
  const Index n_batch = image.batch, h = image.height, w = image.width;
  RowMatrix<Scalar> cols(channels * k * k, n_batch * out_h * out_w);
  for (Index c = 0; c < channels; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.row((c * k + ky) * k + kx).data();
        for (Index n = 0; n < n_batch; ++n) {
          const Scalar* src = image.data.row(c).data() + n * h * w;
          for (Index oy = 0; oy < out_h; ++oy, dst += out_w) {
            const Index iy = oy * g.stride - g.padding + ky * g.dilation;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + out_w, Scalar(0));
              continue;
            }
            const Scalar* row = src + iy * w;
            const Index x0 = kx * g.dilation - g.padding;
            for (Index ox = 0; ox < out_w; ++ox) {
              const Index ix = ox * g.stride + x0;
              dst[ox] = (ix >= 0 && ix < w) ? row[ix] : Scalar(0);
            }
          }
        }
      }
  return cols;
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const ConvGeometry& g, Index out_h, Index out_w, Tensor<Scalar>& image) {
  const Index channels = image.channels(), k = g.kernel;
  const Index n_batch = image.batch, h = image.height, w = image.width;
  if (cols.rows() != channels * k * k || cols.cols() != n_batch * out_h * out_w)
    throw std::invalid_argument("col2im: column matrix does not match image geometry");
  for (Index c = 0; c < channels; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.row((c * k + ky) * k + kx).data();
        for (Index n = 0; n < n_batch; ++n) {
          Scalar* dst = image.data.row(c).data() + n * h * w;
          for (Index oy = 0; oy < out_h; ++oy, src += out_w) {
            const Index iy = oy * g.stride - g.padding + ky * g.dilation;
            if (iy < 0 || iy >= h) continue;
            Scalar* row = dst + iy * w;
            const Index x0 = kx * g.dilation - g.padding;
            for (Index ox = 0; ox < out_w; ++ox) {
              const Index ix = ox * g.stride + x0;
              if (ix >= 0 && ix < w) row[ix] += src[ox];
            }
          }
        }
      }
}

namespace {

template <typename Scalar>
void fill_uniform(RowMatrix<Scalar>& m, Scalar bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void fill_normal(RowMatrix<Scalar>& m, Scalar mean, Scalar stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(static_cast<double>(mean), static_cast<double>(stddev));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

template <typename Scalar>
Conv2d<Scalar>::Conv2d(std::string name, Index in_channels, Index out_channels, ConvGeometry geometry, bool bias)
    : in_(in_channels), out_(out_channels), geom_(geometry), has_bias_(bias) {
  weight.name = name + ".weight";
  weight.reset(out_, in_ * geom_.kernel * geom_.kernel);
  this->bias.name = name + ".bias";
  if (has_bias_) this->bias.reset(out_, 1);
}

template <typename Scalar>
bool Conv2d<Scalar>::pointwise() const {
  return geom_.kernel == 1 && geom_.stride == 1 && geom_.padding == 0;
}

template <typename Scalar>
Tensor<Scalar> Conv2d<Scalar>::forward(const Tensor<Scalar>& x, Mode mode) {
  if (x.channels() != in_)
    throw std::invalid_argument("Conv2d " + weight.name + ": expected " + std::to_string(in_) +
                                " input channels, got " + x.shape_string());
  const Index oh = geom_.conv_out(x.height), ow = geom_.conv_out(x.width);
  if (oh < 1 || ow < 1) throw std::invalid_argument("Conv2d " + weight.name + ": input too small");
  Tensor<Scalar> y;
  y.batch = x.batch;
  y.height = oh;
  y.width = ow;
  if (pointwise())
    y.data.noalias() = weight.value * x.data;
  else
    y.data.noalias() = weight.value * im2col(x, geom_, oh, ow);
  if (has_bias_) y.data.colwise() += bias.value.col(0);
  if (mode == Mode::Train) input_ = x;
  return y;
}

template <typename Scalar>
Tensor<Scalar> Conv2d<Scalar>::backward(const Tensor<Scalar>& dy) {
  const Index oh = dy.height, ow = dy.width;
  Tensor<Scalar> dx(in_, input_.batch, input_.height, input_.width);
  if (pointwise()) {
    weight.grad.noalias() += dy.data * input_.data.transpose();
    dx.data.noalias() = weight.value.transpose() * dy.data;
  } else {
    const RowMatrix<Scalar> cols = im2col(input_, geom_, oh, ow);
    weight.grad.noalias() += dy.data * cols.transpose();
    const RowMatrix<Scalar> dcols = weight.value.transpose() * dy.data;
    col2im(dcols, geom_, oh, ow, dx);
  }
  if (has_bias_) bias.grad.col(0) += dy.data.rowwise().sum();
  return dx;
}

template <typename Scalar>
void Conv2d<Scalar>::collect(std::vector<Param<Scalar>*>& params) {
  params.push_back(&weight);
  if (has_bias_) params.push_back(&bias);
}

template <typename Scalar>
void Conv2d<Scalar>::init_uniform(std::mt19937_64& rng) {
  const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(weight.value.cols()));
  fill_uniform(weight.value, bound, rng);
  if (has_bias_) fill_uniform(bias.value, bound, rng);
}

template <typename Scalar>
void Conv2d<Scalar>::init_normal(std::mt19937_64& rng, Scalar stddev) {
  fill_normal(weight.value, Scalar(0), stddev, rng);
  if (has_bias_) bias.value.setZero();
}

// ---------------------------------------------------------------------------
// ConvTranspose2d

template <typename Scalar>
ConvTranspose2d<Scalar>::ConvTranspose2d(std::string name, Index in_channels, Index out_channels,
                                         ConvGeometry geometry, bool bias)
    : in_(in_channels), out_(out_channels), geom_(geometry), has_bias_(bias) {
  weight.name = name + ".weight";
  weight.reset(in_, out_ * geom_.kernel * geom_.kernel);
  this->bias.name = name + ".bias";
  if (has_bias_) this->bias.reset(out_, 1);
}

template <typename Scalar>
Tensor<Scalar> ConvTranspose2d<Scalar>::forward(const Tensor<Scalar>& x, Mode mode) {
  if (x.channels() != in_)
    throw std::invalid_argument("ConvTranspose2d " + weight.name + ": channel mismatch " + x.shape_string());
  const Index oh = geom_.transposed_out(x.height), ow = geom_.transposed_out(x.width);
  Tensor<Scalar> y(out_, x.batch, oh, ow);
  const RowMatrix<Scalar> cols = weight.value.transpose() * x.data;
  col2im(cols, geom_, x.height, x.width, y);
  if (has_bias_) y.data.colwise() += bias.value.col(0);
  if (mode == Mode::Train) input_ = x;
  return y;
}

template <typename Scalar>
Tensor<Scalar> ConvTranspose2d<Scalar>::backward(const Tensor<Scalar>& dy) {
  const RowMatrix<Scalar> dcols = im2col(dy, geom_, input_.height, input_.width);
  weight.grad.noalias() += input_.data * dcols.transpose();
  Tensor<Scalar> dx;
  dx.batch = input_.batch;
  dx.height = input_.height;
  dx.width = input_.width;
  dx.data.noalias() = weight.value * dcols;
  if (has_bias_) bias.grad.col(0) += dy.data.rowwise().sum();
  return dx;
}

template <typename Scalar>
void ConvTranspose2d<Scalar>::collect(std::vector<Param<Scalar>*>& params) {
  params.push_back(&weight);
  if (has_bias_) params.push_back(&bias);
}

template <typename Scalar>
void ConvTranspose2d<Scalar>::init_uniform(std::mt19937_64& rng) {
  const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(weight.value.cols()));
  fill_uniform(weight.value, bound, rng);
  if (has_bias_) fill_uniform(bias.value, bound, rng);
}

template <typename Scalar>
void ConvTranspose2d<Scalar>::init_normal(std::mt19937_64& rng, Scalar stddev) {
  fill_normal(weight.value, Scalar(0), stddev, rng);
  if (has_bias_) bias.value.setZero();
}

template <typename Scalar>
void ConvTranspose2d<Scalar>::init_identity() {
  if (in_ != out_) throw std::invalid_argument("init_identity needs in == out channels");
  const Index kk = geom_.kernel * geom_.kernel;
  weight.value.setZero();
  for (Index c = 0; c < in_; ++c) weight.value.block(c, c * kk, 1, kk).setOnes();
  if (has_bias_) bias.value.setZero();
}

// ---------------------------------------------------------------------------
// BatchNorm2d

template <typename Scalar>
BatchNorm2d<Scalar>::BatchNorm2d(std::string name, Index channels, Scalar momentum, Scalar eps)
    : name_(std::move(name)), momentum_(momentum), eps_(eps) {
  gamma.name = name_ + ".gamma";
  beta.name = name_ + ".beta";
  gamma.reset(channels, 1);
  gamma.value.setOnes();
  beta.reset(channels, 1);
  running_mean = RowMatrix<Scalar>::Zero(channels, 1);
  running_var = RowMatrix<Scalar>::Ones(channels, 1);
}

template <typename Scalar>
Tensor<Scalar> BatchNorm2d<Scalar>::forward(const Tensor<Scalar>& x, Mode mode) {
  const Index channels = x.channels(), m = x.columns();
  if (channels != gamma.value.rows()) throw std::invalid_argument("BatchNorm2d " + name_ + ": channel mismatch");
  Tensor<Scalar> y;
  y.batch = x.batch;
  y.height = x.height;
  y.width = x.width;
  if (mode == Mode::Eval) {
    const Vector<Scalar> scale = gamma.value.col(0).array() / (running_var.col(0).array() + eps_).sqrt();
    const Vector<Scalar> shift = beta.value.col(0).array() - running_mean.col(0).array() * scale.array();
    y.data = (x.data.array().colwise() * scale.array()).colwise() + shift.array();
    return y;
  }
  if (m < 2) throw std::invalid_argument("BatchNorm2d " + name_ + ": need more than one value per channel");
  const Vector<Scalar> mean = x.data.rowwise().mean();
  normalized_ = x.data.colwise() - mean;
  const Vector<Scalar> var = normalized_.array().square().rowwise().mean();
  inv_std_ = (var.array() + eps_).rsqrt();
  normalized_.array().colwise() *= inv_std_.array();
  y.data = (normalized_.array().colwise() * gamma.value.col(0).array()).colwise() + beta.value.col(0).array();

  const Scalar unbias = static_cast<Scalar>(m) / static_cast<Scalar>(m - 1);
  running_mean.col(0) = (Scalar(1) - momentum_) * running_mean.col(0) + momentum_ * mean;
  running_var.col(0) = (Scalar(1) - momentum_) * running_var.col(0) + momentum_ * unbias * var;
  return y;
}

template <typename Scalar>
Tensor<Scalar> BatchNorm2d<Scalar>::backward(const Tensor<Scalar>& dy) {
  const Scalar m = static_cast<Scalar>(dy.columns());
  gamma.grad.col(0) += (dy.data.array() * normalized_.array()).rowwise().sum().matrix();
  const Vector<Scalar> dy_sum = dy.data.rowwise().sum();
  beta.grad.col(0) += dy_sum;
  // dxhat = dy * gamma; dx = inv_std / m * (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
  const Vector<Scalar> dyxhat_sum = (dy.data.array() * normalized_.array()).rowwise().sum();
  Tensor<Scalar> dx;
  dx.batch = dy.batch;
  dx.height = dy.height;
  dx.width = dy.width;
  const Vector<Scalar> k = gamma.value.col(0).array() * inv_std_.array() / m;
  dx.data = ((dy.data.array() * m).colwise() - dy_sum.array() -
             normalized_.array().colwise() * dyxhat_sum.array())
                .colwise() *
            k.array();
  return dx;
}

template <typename Scalar>
void BatchNorm2d<Scalar>::collect(std::vector<Param<Scalar>*>& params) {
  params.push_back(&gamma);
  params.push_back(&beta);
}

template <typename Scalar>
void BatchNorm2d<Scalar>::collect_buffers(std::vector<Buffer<Scalar>>& buffers) {
  buffers.push_back({name_ + ".running_mean", &running_mean});
  buffers.push_back({name_ + ".running_var", &running_var});
}

template <typename Scalar>
void BatchNorm2d<Scalar>::init_normal(std::mt19937_64& rng, Scalar stddev) {
  fill_normal(gamma.value, Scalar(1), stddev, rng);
  beta.value.setZero();
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename Scalar>
Tensor<Scalar> LeakyReLU<Scalar>::forward(const Tensor<Scalar>& x, Mode mode) {
  Tensor<Scalar> y;
  y.batch = x.batch;
  y.height = x.height;
  y.width = x.width;
  y.data = (x.data.array() > Scalar(0)).select(x.data.array(), x.data.array() * slope_);
  if (mode == Mode::Train) input_ = x.data;
  return y;
}

template <typename Scalar>
Tensor<Scalar> LeakyReLU<Scalar>::backward(const Tensor<Scalar>& dy) const {
  Tensor<Scalar> dx;
  dx.batch = dy.batch;
  dx.height = dy.height;
  dx.width = dy.width;
  dx.data = (input_.array() > Scalar(0)).select(dy.data.array(), dy.data.array() * slope_);
  return dx;
}

template <typename Scalar>
Tensor<Scalar> Tanh<Scalar>::forward(const Tensor<Scalar>& x, Mode mode) {
  Tensor<Scalar> y;
  y.batch = x.batch;
  y.height = x.height;
  y.width = x.width;
  y.data = x.data.array().tanh();
  if (mode == Mode::Train) output_ = y.data;
  return y;
}

template <typename Scalar>
Tensor<Scalar> Tanh<Scalar>::backward(const Tensor<Scalar>& dy) const {
  Tensor<Scalar> dx;
  dx.batch = dy.batch;
  dx.height = dy.height;
  dx.width = dy.width;
  dx.data = dy.data.array() * (Scalar(1) - output_.array().square());
  return dx;
}

// ---------------------------------------------------------------------------
// BilinearUpsample: width pass as one GEMM over all rows, height pass per plane.

template <typename Scalar>
Tensor<Scalar> BilinearUpsample<Scalar>::forward(const Tensor<Scalar>& x, Mode) {
  in_h_ = x.height;
  in_w_ = x.width;
  if (factor_ == 1) return x;
  const Index oh = x.height * factor_, ow = x.width * factor_;
  const RowMatrix<Scalar> uh = bilinear_matrix<Scalar>(x.height, oh);
  const RowMatrix<Scalar> uw_t = bilinear_matrix<Scalar>(x.width, ow).transpose();
  const Index planes = x.channels() * x.batch;
  Eigen::Map<const RowMatrix<Scalar>> rows(x.data.data(), planes * x.height, x.width);
  const RowMatrix<Scalar> wide = rows * uw_t;  // (planes·h) × ow
  Tensor<Scalar> y(x.channels(), x.batch, oh, ow);
  for (Index p = 0; p < planes; ++p) {
    Eigen::Map<RowMatrix<Scalar>> dst(y.data.data() + p * oh * ow, oh, ow);
    dst.noalias() = uh * wide.middleRows(p * x.height, x.height);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> BilinearUpsample<Scalar>::backward(const Tensor<Scalar>& dy) const {
  if (factor_ == 1) return dy;
  const Index oh = dy.height, ow = dy.width;
  const RowMatrix<Scalar> uh_t = bilinear_matrix<Scalar>(in_h_, oh).transpose();
  const RowMatrix<Scalar> uw = bilinear_matrix<Scalar>(in_w_, ow);
  const Index planes = dy.channels() * dy.batch;
  RowMatrix<Scalar> tall(planes * in_h_, ow);
  for (Index p = 0; p < planes; ++p) {
    Eigen::Map<const RowMatrix<Scalar>> src(dy.data.data() + p * oh * ow, oh, ow);
    tall.middleRows(p * in_h_, in_h_).noalias() = uh_t * src;
  }
  Tensor<Scalar> dx(dy.channels(), dy.batch, in_h_, in_w_);
  Eigen::Map<RowMatrix<Scalar>> out(dx.data.data(), planes * in_h_, in_w_);
  out.noalias() = tall * uw;
  return dx;
}

#define COLORLAB_INSTANTIATE(S)                                                                            \
  template RowMatrix<S> im2col<S>(const Tensor<S>&, const ConvGeometry&, Index, Index);                  \
  template void col2im<S>(const RowMatrix<S>&, const ConvGeometry&, Index, Index, Tensor<S>&);            \
  template class Conv2d<S>;                                                                              \
  template class ConvTranspose2d<S>;                                                                     \
  template class BatchNorm2d<S>;                                                                         \
  template class LeakyReLU<S>;                                                                           \
  template class Tanh<S>;                                                                                \
  template class BilinearUpsample<S>;

COLORLAB_INSTANTIATE(float)
COLORLAB_INSTANTIATE(double)
#undef COLORLAB_INSTANTIATE

}  // namespace colorlab::nn
