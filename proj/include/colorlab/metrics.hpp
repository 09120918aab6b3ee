#pragma once

#include "colorlab/color_space.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace colorlab {

/// Fraction of pixels whose R, G and B each differ by strictly less than eps.
template <typename Scalar>
Scalar pixel_accuracy(const RgbImage<Scalar>& pred, const RgbImage<Scalar>& real, Scalar eps);

/// Same criterion applied to each channel on its own.
template <typename Scalar>
std::array<Scalar, 3> pixel_accuracy_per_channel(const RgbImage<Scalar>& pred, const RgbImage<Scalar>& real, Scalar eps);

/// 10·log10(1/MSE) over all pixels and channels (peak 1).  +inf for identical images.
template <typename Scalar>
Scalar psnr(const RgbImage<Scalar>& pred, const RgbImage<Scalar>& real);

inline constexpr Index kSsimWindow = 11;

/// Gaussian-window SSIM (11×11, sigma 1.5, K1 0.01, K2 0.03, data range 1),
/// valid windows only, averaged over the RGB channels.
template <typename Scalar>
Scalar ssim(const RgbImage<Scalar>& pred, const RgbImage<Scalar>& real);

/// Rounds every component to the nearest 1/255, as when the image is saved.
template <typename Scalar>
RgbImage<Scalar> quantize_8bit(const RgbImage<Scalar>& img);

inline const std::vector<double> kDefaultEpsilons{0.02, 0.05};

struct MetricReport {
  std::vector<double> epsilons;
  std::map<double, double> pixel_acc;                               // ε → fraction
  std::map<double, std::array<double, 3>> pixel_acc_per_channel;    // ε → (R, G, B)
  double psnr_db = 0;      // mean over images with finite PSNR
  Index psnr_infinite = 0; // identical pairs, excluded from psnr_db
  double ssim = 0;
  Index n_images = 0;
  Index failures = 0;

  /// "Pixel-Acc ε=2% | Pixel-Acc ε=5% | PSNR (dB) | SSIM" summary line.
  std::string table_row(const std::string& label) const;
  std::string to_text() const;   // one "name value" record per line
  std::string to_csv() const;    // header + one row
  nlohmann::json to_json() const;
};

class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::vector<double> epsilons = kDefaultEpsilons);

  void add(const RgbImage<float>& pred, const RgbImage<float>& real);
  void add_failure() { ++failures_; }
  MetricReport report() const;

 private:
  std::vector<double> eps_;
  std::map<double, double> acc_sum_;
  std::map<double, std::array<double, 3>> channel_sum_;
  double psnr_sum_ = 0;
  Index psnr_finite_ = 0, psnr_inf_ = 0;
  double ssim_sum_ = 0;
  Index n_ = 0, failures_ = 0;
};

/// Maps L planes ([0,100]) to colorized images; models see nothing but L.
using Colorizer = std::function<std::vector<RgbImage<float>>(const std::vector<Plane<float>>&)>;

struct EvaluateOptions {
  std::vector<double> epsilons = kDefaultEpsilons;
  Index batch_size = 64;
  bool quantize = true;  // score the 8-bit image that would be saved
  /// Called with (image index, prediction) for every colorized image.
  std::function<void(Index, const RgbImage<float>&)> on_prediction;
};

/// Colorizes every ground-truth image from its L channel and averages the
/// per-image metrics.
MetricReport evaluate(const Colorizer& model, const std::vector<RgbImage<float>>& truth,
                      const EvaluateOptions& options = {});

/// Scores precomputed predictions (e.g. PNGs written earlier) against truth.
MetricReport evaluate_predictions(const std::vector<RgbImage<float>>& predictions,
                                  const std::vector<RgbImage<float>>& truth, const EvaluateOptions& options = {});

/// Zero-chroma baseline: L with a = b = 0.
Colorizer grayscale_colorizer();

}  // namespace colorlab
