#pragma once

#include "colorlab/color_space.hpp"
#include "colorlab/nn/layers.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace colorlab {

/// ab values are fed to and produced by the networks divided by this.
inline constexpr double kAbScale = 110.0;

struct GeneratorConfig {
  std::vector<Index> enc_channels{64, 128, 256, 512};
  Index image_size = 32;

  Index depth() const { return static_cast<Index>(enc_channels.size()); }
  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

struct DiscriminatorConfig {
  std::vector<Index> channels{64, 128, 256};
  Index image_size = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static DiscriminatorConfig from_json(const nlohmann::json& j);
};

/// U-Net: encoder blocks are 4×4/2 conv + BN + LeakyReLU(0.2).  Each decoder
/// block maps C channels to C/2: 4×4/2 transposed conv to C/2, concat with the
/// mirror-resolution feature (the encoder output, or the input L at full
/// resolution), 3×3 conv to C/2, BN, ReLU.  Output: 1×1 conv to 2 + tanh.
template <typename Scalar>
class Generator {
 public:
  explicit Generator(GeneratorConfig config);

  const GeneratorConfig& config() const { return config_; }
  void init(std::uint64_t seed);

  /// Normalized L (1 channel) → normalized ab (2 channels) in (-1, 1).
  Tensor<Scalar> forward(const Tensor<Scalar>& lightness, nn::Mode mode);
  /// Returns nothing: the input is data, not a learned quantity.
  void backward(const Tensor<Scalar>& dab);

  /// Replace every skip feature by zeros (structural tests only).
  void set_skip_ablation(bool on) { ablate_skips_ = on; }

  nn::Conv2d<Scalar>& output_layer() { return out_conv_; }
  std::vector<nn::Param<Scalar>*> parameters();
  std::vector<nn::Buffer<Scalar>> buffers();

 private:
  struct EncoderBlock {
    nn::Conv2d<Scalar> conv;
    nn::BatchNorm2d<Scalar> norm;
    nn::LeakyReLU<Scalar> act{Scalar(0.2)};
  };
  struct DecoderBlock {
    nn::ConvTranspose2d<Scalar> up;
    nn::Conv2d<Scalar> conv;
    nn::BatchNorm2d<Scalar> norm;
    nn::ReLU<Scalar> act{Scalar(0)};
    Index up_channels = 0;
    Index skip_channels = 0;
  };

  GeneratorConfig config_;
  std::vector<EncoderBlock> encoder_;
  std::vector<DecoderBlock> decoder_;  // decoder_[i] restores the resolution of encoder level i
  nn::Conv2d<Scalar> out_conv_;
  nn::Tanh<Scalar> out_act_;
  bool ablate_skips_ = false;
};

/// Encoder-only critic over (L, ab) pairs; emits one logit per image.
template <typename Scalar>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig config);

  const DiscriminatorConfig& config() const { return config_; }
  void init(std::uint64_t seed);

  /// `pair` = concat(normalized L, normalized ab): 3 channels.  Returns 1 × N logits.
  RowMatrix<Scalar> forward(const Tensor<Scalar>& pair, nn::Mode mode);
  /// Gradient w.r.t. the 3-channel input.
  Tensor<Scalar> backward(const RowMatrix<Scalar>& dlogits);

  nn::Conv2d<Scalar>& output_layer() { return out_conv_; }
  std::vector<nn::Param<Scalar>*> parameters();
  std::vector<nn::Buffer<Scalar>> buffers();

 private:
  struct Block {
    nn::Conv2d<Scalar> conv;
    bool normalized = true;
    nn::BatchNorm2d<Scalar> norm;
    nn::LeakyReLU<Scalar> act{Scalar(0.2)};
  };

  DiscriminatorConfig config_;
  std::vector<Block> blocks_;
  nn::Conv2d<Scalar> out_conv_;
  Index final_size_ = 0;
};

/// Eval-mode generator pass with shape validation.
template <typename Scalar>
Tensor<Scalar> generator_forward(const Tensor<Scalar>& lightness, Generator<Scalar>& net);

/// Eval-mode probabilities that each (L, ab) pair is real.
template <typename Scalar>
std::vector<Scalar> discriminator_forward(const Tensor<Scalar>& lightness, const Tensor<Scalar>& ab,
                                          Discriminator<Scalar>& net);

template <typename Scalar>
struct GanLossTerms {
  Scalar g_adv = 0;
  Scalar g_l1 = 0;
  Scalar lambda = 100;
  Scalar d_real = 0;  // mean discriminator score on real pairs
  Scalar d_fake = 0;  // mean discriminator score on generated pairs

  Scalar generator_total() const { return g_adv + lambda * g_l1; }
};

/// g_adv = mean(−log D(fake)), g_l1 = mean |fake − real|.  Scores are floored at 1e-10.
template <typename Scalar>
GanLossTerms<Scalar> generator_loss(const std::vector<Scalar>& fake_scores, const RowMatrix<Scalar>& fake_ab,
                                    const RowMatrix<Scalar>& real_ab, Scalar lambda);

/// −mean(log D(real)) − mean(log(1 − D(fake))), floored at 1e-10.
template <typename Scalar>
Scalar discriminator_loss(const std::vector<Scalar>& real_scores, const std::vector<Scalar>& fake_scores);

template <typename Scalar>
std::vector<RgbImage<Scalar>> colorize_gan(const std::vector<Plane<Scalar>>& lightness, Generator<Scalar>& net);

}  // namespace colorlab
