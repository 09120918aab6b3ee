#include "colorlab/gan.hpp"

#include "colorlab/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace colorlab {
namespace {

constexpr double kScoreFloor = 1e-10;
constexpr double kDcganInitStd = 0.02;

const nn::ConvGeometry kDown{4, 2, 1, 1};
const nn::ConvGeometry kUp{4, 2, 1, 1};

}  // namespace

void GeneratorConfig::validate() const {
  if (enc_channels.empty()) throw std::invalid_argument("generator config: no encoder blocks");
  for (Index c : enc_channels)
    if (c < 2) throw std::invalid_argument("generator config: channel counts must be >= 2");
  const Index factor = Index(1) << depth();
  if (image_size < factor || image_size % factor != 0)
    throw std::invalid_argument("generator config: image size must be a multiple of 2^depth");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"enc_channels", enc_channels}, {"image_size", image_size}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.enc_channels = j.at("enc_channels").get<std::vector<Index>>();
  c.image_size = j.at("image_size").get<Index>();
  c.validate();
  return c;
}

void DiscriminatorConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("discriminator config: no blocks");
  for (std::size_t i = 1; i < channels.size(); ++i)
    if (channels[i] != 2 * channels[i - 1])
      throw std::invalid_argument("discriminator config: channels must double after each downsampling");
  const Index factor = Index(1) << channels.size();
  if (image_size < factor || image_size % factor != 0)
    throw std::invalid_argument("discriminator config: image size must be a multiple of 2^blocks");
}

nlohmann::json DiscriminatorConfig::to_json() const { return {{"channels", channels}, {"image_size", image_size}}; }

DiscriminatorConfig DiscriminatorConfig::from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.channels = j.at("channels").get<std::vector<Index>>();
  c.image_size = j.at("image_size").get<Index>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Generator

template <typename Scalar>
Generator<Scalar>::Generator(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  Index in = 1;
  for (std::size_t i = 0; i < config_.enc_channels.size(); ++i) {
    const std::string name = "enc" + std::to_string(i + 1);
    EncoderBlock b;
    b.conv = nn::Conv2d<Scalar>(name + ".conv", in, config_.enc_channels[i], kDown);
    b.norm = nn::BatchNorm2d<Scalar>(name + ".bn", config_.enc_channels[i]);
    encoder_.push_back(std::move(b));
    in = config_.enc_channels[i];
  }
  decoder_.resize(encoder_.size());
  Index channels = config_.enc_channels.back();
  for (std::size_t i = encoder_.size(); i-- > 0;) {
    const std::string name = "dec" + std::to_string(i + 1);
    DecoderBlock& b = decoder_[i];
    b.up_channels = std::max<Index>(channels / 2, 1);
    b.skip_channels = i == 0 ? 1 : config_.enc_channels[i - 1];
    b.up = nn::ConvTranspose2d<Scalar>(name + ".up", channels, b.up_channels, kUp);
    b.conv = nn::Conv2d<Scalar>(name + ".conv", b.up_channels + b.skip_channels, b.up_channels,
                                nn::ConvGeometry{3, 1, 1, 1});
    b.norm = nn::BatchNorm2d<Scalar>(name + ".bn", b.up_channels);
    channels = b.up_channels;
  }
  out_conv_ = nn::Conv2d<Scalar>("out.conv", channels, 2, nn::ConvGeometry{1, 1, 0, 1});
}

template <typename Scalar>
void Generator<Scalar>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto stddev = static_cast<Scalar>(kDcganInitStd);
  for (auto& b : encoder_) {
    b.conv.init_normal(rng, stddev);
    b.norm.init_normal(rng, stddev);
  }
  for (auto& b : decoder_) {
    b.up.init_normal(rng, stddev);
    b.conv.init_normal(rng, stddev);
    b.norm.init_normal(rng, stddev);
  }
  out_conv_.init_normal(rng, stddev);
}

template <typename Scalar>
Tensor<Scalar> Generator<Scalar>::forward(const Tensor<Scalar>& lightness, nn::Mode mode) {
  std::vector<Tensor<Scalar>> features;  // features[i] = output of encoder block i
  Tensor<Scalar> x = lightness;
  for (auto& b : encoder_) {
    x = b.act.forward(b.norm.forward(b.conv.forward(x, mode), mode), mode);
    features.push_back(x);
  }
  for (std::size_t i = decoder_.size(); i-- > 0;) {
    DecoderBlock& b = decoder_[i];
    Tensor<Scalar> up = b.up.forward(x, mode);
    Tensor<Scalar> skip = i == 0 ? lightness : features[i - 1];
    if (ablate_skips_) skip.data.setZero();
    x = b.act.forward(b.norm.forward(b.conv.forward(concat_channels(up, skip), mode), mode), mode);
  }
  return out_act_.forward(out_conv_.forward(x, mode), mode);
}

template <typename Scalar>
void Generator<Scalar>::backward(const Tensor<Scalar>& dab) {
  Tensor<Scalar> g = out_conv_.backward(out_act_.backward(dab));
  std::vector<Tensor<Scalar>> skip_grads(encoder_.size());
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    DecoderBlock& b = decoder_[i];
    const Tensor<Scalar> dcat = b.conv.backward(b.norm.backward(b.act.backward(g)));
    if (i > 0 && !ablate_skips_) skip_grads[i - 1] = slice_channels(dcat, b.up_channels, b.skip_channels);
    g = b.up.backward(slice_channels(dcat, 0, b.up_channels));
  }
  for (std::size_t i = encoder_.size(); i-- > 0;) {
    if (skip_grads[i].data.size() > 0) g.data += skip_grads[i].data;
    EncoderBlock& b = encoder_[i];
    g = b.conv.backward(b.norm.backward(b.act.backward(g)));
  }
}

template <typename Scalar>
std::vector<nn::Param<Scalar>*> Generator<Scalar>::parameters() {
  std::vector<nn::Param<Scalar>*> out;
  for (auto& b : encoder_) {
    b.conv.collect(out);
    b.norm.collect(out);
  }
  for (std::size_t i = decoder_.size(); i-- > 0;) {
    decoder_[i].up.collect(out);
    decoder_[i].conv.collect(out);
    decoder_[i].norm.collect(out);
  }
  out_conv_.collect(out);
  return out;
}

template <typename Scalar>
std::vector<nn::Buffer<Scalar>> Generator<Scalar>::buffers() {
  std::vector<nn::Buffer<Scalar>> out;
  for (auto& b : encoder_) b.norm.collect_buffers(out);
  for (std::size_t i = decoder_.size(); i-- > 0;) decoder_[i].norm.collect_buffers(out);
  return out;
}

// ---------------------------------------------------------------------------
// Discriminator

template <typename Scalar>
Discriminator<Scalar>::Discriminator(DiscriminatorConfig config) : config_(std::move(config)) {
  config_.validate();
  Index in = 3;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    const std::string name = "disc" + std::to_string(i + 1);
    Block b;
    b.conv = nn::Conv2d<Scalar>(name + ".conv", in, config_.channels[i], kDown);
    b.normalized = i > 0;
    if (b.normalized) b.norm = nn::BatchNorm2d<Scalar>(name + ".bn", config_.channels[i]);
    blocks_.push_back(std::move(b));
    in = config_.channels[i];
  }
  final_size_ = config_.image_size >> config_.channels.size();
  out_conv_ = nn::Conv2d<Scalar>("disc.out", in, 1, nn::ConvGeometry{final_size_, 1, 0, 1});
}

template <typename Scalar>
void Discriminator<Scalar>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto stddev = static_cast<Scalar>(kDcganInitStd);
  for (auto& b : blocks_) {
    b.conv.init_normal(rng, stddev);
    if (b.normalized) b.norm.init_normal(rng, stddev);
  }
  out_conv_.init_normal(rng, stddev);
}

template <typename Scalar>
RowMatrix<Scalar> Discriminator<Scalar>::forward(const Tensor<Scalar>& pair, nn::Mode mode) {
  if (pair.channels() != 3 || pair.height != config_.image_size || pair.width != config_.image_size)
    throw std::invalid_argument("discriminator: expected 3x" + std::to_string(config_.image_size) + "x" +
                                std::to_string(config_.image_size) + " input, got " + pair.shape_string());
  Tensor<Scalar> x = pair;
  for (auto& b : blocks_) {
    x = b.conv.forward(x, mode);
    if (b.normalized) x = b.norm.forward(x, mode);
    x = b.act.forward(x, mode);
  }
  return out_conv_.forward(x, mode).data;  // 1 × N (spatial size 1×1)
}

template <typename Scalar>
Tensor<Scalar> Discriminator<Scalar>::backward(const RowMatrix<Scalar>& dlogits) {
  Tensor<Scalar> g;
  g.data = dlogits;
  g.batch = dlogits.cols();
  g.height = 1;
  g.width = 1;
  g = out_conv_.backward(g);
  for (auto b = blocks_.rbegin(); b != blocks_.rend(); ++b) {
    g = b->act.backward(g);
    if (b->normalized) g = b->norm.backward(g);
    g = b->conv.backward(g);
  }
  return g;
}

template <typename Scalar>
std::vector<nn::Param<Scalar>*> Discriminator<Scalar>::parameters() {
  std::vector<nn::Param<Scalar>*> out;
  for (auto& b : blocks_) {
    b.conv.collect(out);
    if (b.normalized) b.norm.collect(out);
  }
  out_conv_.collect(out);
  return out;
}

template <typename Scalar>
std::vector<nn::Buffer<Scalar>> Discriminator<Scalar>::buffers() {
  std::vector<nn::Buffer<Scalar>> out;
  for (auto& b : blocks_)
    if (b.normalized) b.norm.collect_buffers(out);
  return out;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> generator_forward(const Tensor<Scalar>& lightness, Generator<Scalar>& net) {
  const Index factor = Index(1) << net.config().depth();
  if (lightness.channels() != 1) throw std::invalid_argument("generator_forward: expected one lightness channel");
  if (lightness.height % factor != 0 || lightness.width % factor != 0 || lightness.height < factor ||
      lightness.width < factor)
    throw std::invalid_argument("generator_forward: input size must be a multiple of " + std::to_string(factor));
  return net.forward(lightness, nn::Mode::Eval);
}

template <typename Scalar>
std::vector<Scalar> discriminator_forward(const Tensor<Scalar>& lightness, const Tensor<Scalar>& ab,
                                          Discriminator<Scalar>& net) {
  if (lightness.channels() != 1 || ab.channels() != 2) throw std::invalid_argument("discriminator_forward: channels");
  const RowMatrix<Scalar> logits = net.forward(concat_channels(lightness, ab), nn::Mode::Eval);
  std::vector<Scalar> scores(logits.cols());
  for (Index i = 0; i < logits.cols(); ++i) scores[i] = nn::sigmoid(logits(0, i));
  return scores;
}

template <typename Scalar>
GanLossTerms<Scalar> generator_loss(const std::vector<Scalar>& fake_scores, const RowMatrix<Scalar>& fake_ab,
                                    const RowMatrix<Scalar>& real_ab, Scalar lambda) {
  if (fake_scores.empty()) throw std::invalid_argument("generator_loss: no scores");
  if (fake_ab.rows() != real_ab.rows() || fake_ab.cols() != real_ab.cols())
    throw std::invalid_argument("generator_loss: ab shape mismatch");
  if (lambda < Scalar(0)) throw std::invalid_argument("generator_loss: lambda must be >= 0");
  GanLossTerms<Scalar> t;
  t.lambda = lambda;
  Scalar adv = 0;
  for (Scalar s : fake_scores) adv -= std::log(std::max(s, Scalar(kScoreFloor)));
  t.g_adv = adv / static_cast<Scalar>(fake_scores.size());
  t.g_l1 = (fake_ab - real_ab).cwiseAbs().mean();
  Scalar mean_fake = 0;
  for (Scalar s : fake_scores) mean_fake += s;
  t.d_fake = mean_fake / static_cast<Scalar>(fake_scores.size());
  return t;
}

template <typename Scalar>
Scalar discriminator_loss(const std::vector<Scalar>& real_scores, const std::vector<Scalar>& fake_scores) {
  if (real_scores.empty() || fake_scores.empty()) throw std::invalid_argument("discriminator_loss: no scores");
  Scalar real_term = 0, fake_term = 0;
  for (Scalar s : real_scores) real_term -= std::log(std::max(s, Scalar(kScoreFloor)));
  for (Scalar s : fake_scores) fake_term -= std::log(std::max(Scalar(1) - s, Scalar(kScoreFloor)));
  return real_term / static_cast<Scalar>(real_scores.size()) + fake_term / static_cast<Scalar>(fake_scores.size());
}

template <typename Scalar>
std::vector<RgbImage<Scalar>> colorize_gan(const std::vector<Plane<Scalar>>& lightness, Generator<Scalar>& net) {
  const Tensor<Scalar> input = lightness_tensor(lightness);
  const Tensor<Scalar> ab = generator_forward(input, net);
  const RowMatrix<Scalar> scaled = ab.data * static_cast<Scalar>(kAbScale);
  std::vector<RgbImage<Scalar>> out;
  out.reserve(lightness.size());
  for (Index n = 0; n < input.batch; ++n) {
    LabImage<Scalar> lab;
    lab.L = lightness[n];
    lab.ab = matrix_to_ab(scaled, input.height, input.width, n);
    out.push_back(lab_to_rgb(lab));
  }
  return out;
}

#define COLORLAB_INSTANTIATE(S)                                                                                \
  template class Generator<S>;                                                                                 \
  template class Discriminator<S>;                                                                             \
  template Tensor<S> generator_forward<S>(const Tensor<S>&, Generator<S>&);                                    \
  template std::vector<S> discriminator_forward<S>(const Tensor<S>&, const Tensor<S>&, Discriminator<S>&);     \
  template GanLossTerms<S> generator_loss<S>(const std::vector<S>&, const RowMatrix<S>&, const RowMatrix<S>&, S); \
  template S discriminator_loss<S>(const std::vector<S>&, const std::vector<S>&);                              \
  template std::vector<RgbImage<S>> colorize_gan<S>(const std::vector<Plane<S>>&, Generator<S>&);

COLORLAB_INSTANTIATE(float)
COLORLAB_INSTANTIATE(double)
#undef COLORLAB_INSTANTIATE

}  // namespace colorlab
