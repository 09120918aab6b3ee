#include "colorlab/classifier.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace colorlab {

std::string to_string(OutputVariant v) {
  switch (v) {
    case OutputVariant::UpsampleBilinear: return "bilinear";
    case OutputVariant::UpsampleDeconv: return "deconv";
    case OutputVariant::DownsampleTarget: return "downsample";
  }
  return "?";
}

OutputVariant parse_variant(const std::string& s) {
  if (s == "bilinear") return OutputVariant::UpsampleBilinear;
  if (s == "deconv") return OutputVariant::UpsampleDeconv;
  if (s == "downsample") return OutputVariant::DownsampleTarget;
  throw std::invalid_argument("unknown classifier variant '" + s + "' (bilinear|deconv|downsample)");
}

ClassifierConfig ClassifierConfig::standard(OutputVariant variant) {
  ClassifierConfig c;
  c.variant = variant;
  c.blocks = {
      {16, 2, 2, 1}, {32, 2, 2, 1}, {64, 3, 1, 1}, {128, 3, 1, 1},
      {128, 3, 1, 2}, {128, 3, 1, 2}, {128, 3, 1, 1}, {64, 3, 1, 1},
  };
  return c;
}

Index ClassifierConfig::feature_stride() const {
  Index s = 1;
  for (const auto& b : blocks) s *= b.stride;
  return s;
}

Index ClassifierConfig::output_size(Index in) const {
  return variant == OutputVariant::DownsampleTarget ? in / feature_stride() : in;
}

void ClassifierConfig::validate() const {
  if (blocks.empty()) throw std::invalid_argument("classifier config: no blocks");
  if (q != AbBinGrid::kExpectedBins) throw std::invalid_argument("classifier config: q must be 313");
  for (const auto& b : blocks)
    if (b.channels < 1 || b.layers < 1 || b.stride < 1 || b.dilation < 1)
      throw std::invalid_argument("classifier config: invalid block");
  const Index s = feature_stride();
  if ((s & (s - 1)) != 0) throw std::invalid_argument("classifier config: feature stride must be a power of 2");
  if (image_size < 1 || image_size % s != 0)
    throw std::invalid_argument("classifier config: image size not divisible by feature stride");
}

nlohmann::json ClassifierConfig::to_json() const {
  nlohmann::json blocks_j = nlohmann::json::array();
  for (const auto& b : blocks)
    blocks_j.push_back({{"channels", b.channels}, {"layers", b.layers}, {"stride", b.stride}, {"dilation", b.dilation}});
  return {{"blocks", blocks_j}, {"variant", to_string(variant)}, {"q", q}, {"image_size", image_size}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  for (const auto& b : j.at("blocks"))
    c.blocks.push_back({b.at("channels").get<Index>(), b.at("layers").get<int>(), b.at("stride").get<Index>(),
                        b.at("dilation").get<Index>()});
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.q = j.at("q").get<Index>();
  c.image_size = j.at("image_size").get<Index>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
ClassifierNet<Scalar>::ClassifierNet(ClassifierConfig config) : config_(std::move(config)) {
  config_.validate();
  Index in = 1;
  for (std::size_t bi = 0; bi < config_.blocks.size(); ++bi) {
    const auto& spec = config_.blocks[bi];
    Block block;
    const std::string prefix = "block" + std::to_string(bi + 1);
    for (int li = 0; li < spec.layers; ++li) {
      nn::ConvGeometry g{3, li + 1 == spec.layers ? spec.stride : 1, spec.dilation, spec.dilation};
      block.convs.emplace_back(prefix + ".conv" + std::to_string(li + 1), in, spec.channels, g);
      block.relus.emplace_back(Scalar(0));
      in = spec.channels;
    }
    block.norm = nn::BatchNorm2d<Scalar>(prefix + ".bn", spec.channels);
    blocks_.push_back(std::move(block));
  }
  head_ = nn::Conv2d<Scalar>("head", in, config_.q, nn::ConvGeometry{1, 1, 0, 1});
  const Index s = config_.feature_stride();
  bilinear_ = nn::BilinearUpsample<Scalar>(s);
  if (config_.variant == OutputVariant::UpsampleDeconv)
    deconv_ = nn::ConvTranspose2d<Scalar>("upsample", config_.q, config_.q, nn::ConvGeometry{s, s, 0, 1});
}

template <typename Scalar>
void ClassifierNet<Scalar>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& b : blocks_)
    for (auto& c : b.convs) c.init_uniform(rng);
  head_.init_uniform(rng);
  if (config_.variant == OutputVariant::UpsampleDeconv) deconv_.init_identity();
}

template <typename Scalar>
Tensor<Scalar> ClassifierNet<Scalar>::forward(const Tensor<Scalar>& lightness, nn::Mode mode) {
  Tensor<Scalar> x = lightness;
  for (auto& b : blocks_) {
    for (std::size_t i = 0; i < b.convs.size(); ++i) x = b.relus[i].forward(b.convs[i].forward(x, mode), mode);
    x = b.norm.forward(x, mode);
  }
  x = head_.forward(x, mode);
  switch (config_.variant) {
    case OutputVariant::UpsampleBilinear: return bilinear_.forward(x, mode);
    case OutputVariant::UpsampleDeconv: return deconv_.forward(x, mode);
    case OutputVariant::DownsampleTarget: break;
  }
  return x;
}

template <typename Scalar>
void ClassifierNet<Scalar>::backward(const Tensor<Scalar>& dlogits) {
  Tensor<Scalar> g;
  switch (config_.variant) {
    case OutputVariant::UpsampleBilinear: g = bilinear_.backward(dlogits); break;
    case OutputVariant::UpsampleDeconv: g = deconv_.backward(dlogits); break;
    case OutputVariant::DownsampleTarget: g = dlogits; break;
  }
  g = head_.backward(g);
  for (auto b = blocks_.rbegin(); b != blocks_.rend(); ++b) {
    g = b->norm.backward(g);
    for (std::size_t i = b->convs.size(); i-- > 0;) g = b->convs[i].backward(b->relus[i].backward(g));
  }
}

template <typename Scalar>
std::vector<nn::Param<Scalar>*> ClassifierNet<Scalar>::parameters() {
  std::vector<nn::Param<Scalar>*> out;
  for (auto& b : blocks_) {
    for (auto& c : b.convs) c.collect(out);
    b.norm.collect(out);
  }
  head_.collect(out);
  if (config_.variant == OutputVariant::UpsampleDeconv) deconv_.collect(out);
  return out;
}

template <typename Scalar>
std::vector<nn::Buffer<Scalar>> ClassifierNet<Scalar>::buffers() {
  std::vector<nn::Buffer<Scalar>> out;
  for (auto& b : blocks_) b.norm.collect_buffers(out);
  return out;
}

template <typename Scalar>
Tensor<Scalar> classifier_forward(const Tensor<Scalar>& lightness, ClassifierNet<Scalar>& net) {
  const auto& cfg = net.config();
  const Index s = cfg.feature_stride();
  if (lightness.channels() != 1) throw std::invalid_argument("classifier_forward: expected one lightness channel");
  if (lightness.height % s != 0 || lightness.width % s != 0)
    throw std::invalid_argument("classifier_forward: input " + std::to_string(lightness.height) + "x" +
                                std::to_string(lightness.width) + " not divisible by feature stride " +
                                std::to_string(s));
  return net.forward(lightness, nn::Mode::Eval);
}

template <typename Scalar>
RowMatrix<Scalar> softmax(const RowMatrix<Scalar>& logits) {
  const RowMatrix<Scalar> col_max = logits.colwise().maxCoeff();
  RowMatrix<Scalar> e = (logits.rowwise() - col_max.row(0)).array().exp().matrix();
  const RowMatrix<Scalar> sums = e.colwise().sum();
  e.array().rowwise() /= sums.row(0).array();
  return e;
}

namespace {
constexpr double kProbabilityFloor = 1e-10;

template <typename Scalar>
void check_pair(const ColorDistribution<Scalar>& predicted, const ColorDistribution<Scalar>& target) {
  if (predicted.probs.rows() != target.probs.rows() || predicted.probs.cols() != target.probs.cols())
    throw std::invalid_argument("classification_loss: shape mismatch");
  if (!predicted.probs.allFinite() || !target.probs.allFinite())
    throw std::domain_error("classification_loss: non-finite input");
}
}  // namespace

template <typename Scalar>
Scalar classification_loss(const ColorDistribution<Scalar>& predicted, const ColorDistribution<Scalar>& target) {
  check_pair(predicted, target);
  const auto logp = predicted.probs.array().max(Scalar(kProbabilityFloor)).log();
  const Scalar total = -(target.probs.array() * logp).sum();
  return total / static_cast<Scalar>(std::max<Index>(target.batch, 1));
}

template <typename Scalar>
LossAndGradient<Scalar> softmax_classification_loss(const RowMatrix<Scalar>& logits,
                                                    const ColorDistribution<Scalar>& target) {
  if (!logits.allFinite()) throw std::domain_error("classification_loss: non-finite logits");
  ColorDistribution<Scalar> predicted;
  predicted.probs = softmax(logits);
  predicted.batch = target.batch;
  predicted.height = target.height;
  predicted.width = target.width;
  predicted.grid = target.grid;
  LossAndGradient<Scalar> out;
  out.loss = classification_loss(predicted, target);
  // Z sums to 1 per pixel, so d/dlogits = softmax − Z.
  const Scalar scale = Scalar(1) / static_cast<Scalar>(std::max<Index>(target.batch, 1));
  out.gradient = (predicted.probs - target.probs) * scale;
  return out;
}

template <typename Scalar>
Tensor<Scalar> lightness_tensor(const std::vector<Plane<Scalar>>& lightness) {
  if (lightness.empty()) throw std::invalid_argument("no images");
  const Index h = lightness[0].rows(), w = lightness[0].cols();
  Tensor<Scalar> t(1, static_cast<Index>(lightness.size()), h, w);
  for (std::size_t n = 0; n < lightness.size(); ++n) {
    if (lightness[n].rows() != h || lightness[n].cols() != w)
      throw std::invalid_argument("lightness planes differ in size");
    t.plane(0, static_cast<Index>(n)) = (lightness[n] / Scalar(50) - Scalar(1)).matrix();
  }
  return t;
}

template <typename Scalar>
std::vector<RgbImage<Scalar>> colorize_classifier(const std::vector<Plane<Scalar>>& lightness,
                                                  ClassifierNet<Scalar>& net, std::shared_ptr<const AbBinGrid> grid,
                                                  Scalar temperature) {
  if (grid->size() != net.config().q) throw std::invalid_argument("colorize_classifier: grid/q mismatch");
  const Tensor<Scalar> input = lightness_tensor(lightness);
  const Tensor<Scalar> logits = classifier_forward(input, net);
  ColorDistribution<Scalar> dist;
  dist.probs = softmax(logits.data);
  dist.batch = logits.batch;
  dist.height = logits.height;
  dist.width = logits.width;
  dist.grid = grid;
  const RowMatrix<Scalar> ab = decode_annealed_mean(dist, temperature);

  std::vector<RgbImage<Scalar>> out;
  out.reserve(lightness.size());
  for (Index n = 0; n < input.batch; ++n) {
    LabImage<Scalar> lab;
    lab.L = lightness[n];
    lab.ab = matrix_to_ab(ab, logits.height, logits.width, n);
    if (logits.height != input.height || logits.width != input.width)
      for (auto& p : lab.ab) p = resize_bilinear(p, input.height, input.width);
    out.push_back(lab_to_rgb(lab));
  }
  return out;
}

#define COLORLAB_INSTANTIATE(S)                                                                                \
  template class ClassifierNet<S>;                                                                             \
  template Tensor<S> classifier_forward<S>(const Tensor<S>&, ClassifierNet<S>&);                               \
  template RowMatrix<S> softmax<S>(const RowMatrix<S>&);                                                       \
  template S classification_loss<S>(const ColorDistribution<S>&, const ColorDistribution<S>&);                 \
  template LossAndGradient<S> softmax_classification_loss<S>(const RowMatrix<S>&, const ColorDistribution<S>&); \
  template Tensor<S> lightness_tensor<S>(const std::vector<Plane<S>>&);                                        \
  template std::vector<RgbImage<S>> colorize_classifier<S>(const std::vector<Plane<S>>&, ClassifierNet<S>&,    \
                                                           std::shared_ptr<const AbBinGrid>, S);

COLORLAB_INSTANTIATE(float)
COLORLAB_INSTANTIATE(double)
#undef COLORLAB_INSTANTIATE

}  // namespace colorlab
