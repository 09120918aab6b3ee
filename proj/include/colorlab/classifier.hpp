#pragma once

#include "colorlab/color_space.hpp"
#include "colorlab/nn/layers.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace colorlab {

enum class OutputVariant { UpsampleBilinear, UpsampleDeconv, DownsampleTarget };

std::string to_string(OutputVariant v);
OutputVariant parse_variant(const std::string& s);  // "bilinear" | "deconv" | "downsample"

/// One block: `layers` × (3×3 conv + ReLU), the last conv carrying `stride`,
/// every conv using `dilation`; batch norm at the end.
struct ConvBlockSpec {
  Index channels = 64;
  int layers = 2;
  Index stride = 1;
  Index dilation = 1;
};

struct ClassifierConfig {
  std::vector<ConvBlockSpec> blocks;
  OutputVariant variant = OutputVariant::DownsampleTarget;
  Index q = AbBinGrid::kExpectedBins;
  Index image_size = 32;  // spatial size the checkpoint was trained on

  /// Eight blocks of 16, 32, 64, 128, 128, 128, 128, 64 channels; blocks 1-2
  /// downsample (stride 4 overall), blocks 5-6 use dilation 2.
  static ClassifierConfig standard(OutputVariant variant);

  Index feature_stride() const;
  /// Spatial size of the logits for an input of size `in`.
  Index output_size(Index in) const;
  void validate() const;

  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

/// Lightness normalization used by both models: [0,100] -> [-1,1].
template <typename Scalar>
Scalar normalize_lightness(Scalar L) {
  return L / Scalar(50) - Scalar(1);
}

template <typename Scalar>
class ClassifierNet {
 public:
  explicit ClassifierNet(ClassifierConfig config);

  const ClassifierConfig& config() const { return config_; }

  /// Kaiming-uniform style init (bound 1/sqrt(fan_in)); deconv upsampler
  /// starts as nearest-neighbor copy.
  void init(std::uint64_t seed);

  /// `lightness` holds normalized L, one channel.  Returns q-channel logits.
  Tensor<Scalar> forward(const Tensor<Scalar>& lightness, nn::Mode mode);
  void backward(const Tensor<Scalar>& dlogits);

  std::vector<nn::Param<Scalar>*> parameters();
  std::vector<nn::Buffer<Scalar>> buffers();

 private:
  struct Block {
    std::vector<nn::Conv2d<Scalar>> convs;
    std::vector<nn::ReLU<Scalar>> relus;
    nn::BatchNorm2d<Scalar> norm;
  };

  ClassifierConfig config_;
  std::vector<Block> blocks_;
  nn::Conv2d<Scalar> head_;
  nn::BilinearUpsample<Scalar> bilinear_;
  nn::ConvTranspose2d<Scalar> deconv_;
};

/// Evaluation-mode forward pass with input validation.
template <typename Scalar>
Tensor<Scalar> classifier_forward(const Tensor<Scalar>& lightness, ClassifierNet<Scalar>& net);

/// Column-wise softmax of q × P logits.
template <typename Scalar>
RowMatrix<Scalar> softmax(const RowMatrix<Scalar>& logits);

/// −Σ Z log Ẑ summed over pixels and bins, averaged over the batch.  Ẑ is
/// floored at 1e-10.  Throws on shape mismatch or non-finite inputs.
template <typename Scalar>
Scalar classification_loss(const ColorDistribution<Scalar>& predicted, const ColorDistribution<Scalar>& target);

/// Softmax + classification loss; also returns d(loss)/d(logits).
template <typename Scalar>
struct LossAndGradient {
  Scalar loss;
  RowMatrix<Scalar> gradient;
};

template <typename Scalar>
LossAndGradient<Scalar> softmax_classification_loss(const RowMatrix<Scalar>& logits,
                                                    const ColorDistribution<Scalar>& target);

/// L planes in [0,100] → colorized sRGB images.
template <typename Scalar>
std::vector<RgbImage<Scalar>> colorize_classifier(const std::vector<Plane<Scalar>>& lightness,
                                                  ClassifierNet<Scalar>& net, std::shared_ptr<const AbBinGrid> grid,
                                                  Scalar temperature = Scalar(0.38));

/// Packs L planes (raw, [0,100]) into a normalized one-channel tensor.
template <typename Scalar>
Tensor<Scalar> lightness_tensor(const std::vector<Plane<Scalar>>& lightness);

}  // namespace colorlab
