#include "colorlab/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace colorlab {
namespace {

template <typename Scalar>
void check_shapes(const RgbImage<Scalar>& a, const RgbImage<Scalar>& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument(std::string(what) + ": image shapes differ");
}

Eigen::VectorXd gaussian_window() {
  Eigen::VectorXd w(kSsimWindow);
  const double sigma = 1.5;
  const Index r = kSsimWindow / 2;
  for (Index i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i - r);
    w[i] = std::exp(-d * d / (2 * sigma * sigma));
  }
  return w / w.sum();
}

/// Separable Gaussian filter keeping only fully covered positions.
Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& p, const Eigen::VectorXd& w) {
  const Index k = w.size(), h = p.rows(), wd = p.cols();
  Eigen::ArrayXXd horiz = Eigen::ArrayXXd::Zero(h, wd - k + 1);
  for (Index i = 0; i < k; ++i) horiz += w[i] * p.middleCols(i, wd - k + 1);
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(h - k + 1, wd - k + 1);
  for (Index i = 0; i < k; ++i) out += w[i] * horiz.middleRows(i, h - k + 1);
  return out;
}

}  // namespace

template <typename Scalar>
Scalar pixel_accuracy(const RgbImage<Scalar>& pred, const RgbImage<Scalar>& real, Scalar eps) {
  check_shapes(pred, real, "pixel_accuracy");
  auto ok = ((pred.channels[0] - real.channels[0]).abs() < eps) && ((pred.channels[1] - real.channels[1]).abs() < eps) &&
            ((pred.channels[2] - real.channels[2]).abs() < eps);
  return static_cast<Scalar>(ok.count()) / static_cast<Scalar>(pred.channels[0].size());
}

template <typename Scalar>
std::array<Scalar, 3> pixel_accuracy_per_channel(const RgbImage<Scalar>& pred, const RgbImage<Scalar>& real,
                                                 Scalar eps) {
  check_shapes(pred, real, "pixel_accuracy");
  std::array<Scalar, 3> out{};
  for (int c = 0; c < 3; ++c)
    out[c] = static_cast<Scalar>(((pred.channels[c] - real.channels[c]).abs() < eps).count()) /
             static_cast<Scalar>(pred.channels[c].size());
  return out;
}

template <typename Scalar>
Scalar psnr(const RgbImage<Scalar>& pred, const RgbImage<Scalar>& real) {
  check_shapes(pred, real, "psnr");
  double sq = 0;
  for (int c = 0; c < 3; ++c) sq += (pred.channels[c] - real.channels[c]).template cast<double>().square().sum();
  const double mse = sq / (3.0 * static_cast<double>(pred.channels[0].size()));
  if (mse == 0) return std::numeric_limits<Scalar>::infinity();
  return static_cast<Scalar>(10.0 * std::log10(1.0 / mse));
}

template <typename Scalar>
Scalar ssim(const RgbImage<Scalar>& pred, const RgbImage<Scalar>& real) {
  check_shapes(pred, real, "ssim");
  if (pred.height() < kSsimWindow || pred.width() < kSsimWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  static const Eigen::VectorXd w = gaussian_window();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    const Eigen::ArrayXXd x = pred.channels[c].template cast<double>();
    const Eigen::ArrayXXd y = real.channels[c].template cast<double>();
    const Eigen::ArrayXXd mx = filter_valid(x, w), my = filter_valid(y, w);
    const Eigen::ArrayXXd sxx = filter_valid(x * x, w) - mx * mx;
    const Eigen::ArrayXXd syy = filter_valid(y * y, w) - my * my;
    const Eigen::ArrayXXd sxy = filter_valid(x * y, w) - mx * my;
    const Eigen::ArrayXXd map =
        ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    total += map.mean();
  }
  return static_cast<Scalar>(total / 3.0);
}

template <typename Scalar>
RgbImage<Scalar> quantize_8bit(const RgbImage<Scalar>& img) {
  RgbImage<Scalar> out = img;
  for (auto& c : out.channels) c = (c.max(Scalar(0)).min(Scalar(1)) * Scalar(255)).round() / Scalar(255);
  return out;
}

#define COLORLAB_INSTANTIATE(S)                                                                          \
  template S pixel_accuracy<S>(const RgbImage<S>&, const RgbImage<S>&, S);                               \
  template std::array<S, 3> pixel_accuracy_per_channel<S>(const RgbImage<S>&, const RgbImage<S>&, S);    \
  template S psnr<S>(const RgbImage<S>&, const RgbImage<S>&);                                            \
  template S ssim<S>(const RgbImage<S>&, const RgbImage<S>&);                                            \
  template RgbImage<S> quantize_8bit<S>(const RgbImage<S>&);

COLORLAB_INSTANTIATE(float)
COLORLAB_INSTANTIATE(double)
#undef COLORLAB_INSTANTIATE

// ---------------------------------------------------------------------------

namespace {
std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << 100.0 * v << "%";
  return os.str();
}
}  // namespace

std::string MetricReport::table_row(const std::string& label) const {
  std::ostringstream os;
  os << std::left << std::setw(24) << label;
  for (double e : epsilons) os << " | " << std::setw(10) << percent(pixel_acc.at(e));
  os << " | " << std::fixed << std::setprecision(3) << std::setw(9) << psnr_db << " | " << ssim;
  return os.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(9);
  for (double e : epsilons) os << "pixel_acc@" << e << " " << pixel_acc.at(e) << "\n";
  static const char* names[3] = {"R", "G", "B"};
  for (double e : epsilons)
    for (int c = 0; c < 3; ++c) os << "pixel_acc_" << names[c] << "@" << e << " " << pixel_acc_per_channel.at(e)[c] << "\n";
  os << "psnr_db " << psnr_db << "\n"
     << "psnr_infinite " << psnr_infinite << "\n"
     << "ssim " << ssim << "\n"
     << "n_images " << n_images << "\n"
     << "failures " << failures << "\n";
  return os.str();
}

std::string MetricReport::to_csv() const {
  std::ostringstream head, row;
  row << std::setprecision(9);
  static const char* names[3] = {"R", "G", "B"};
  for (double e : epsilons) {
    head << "pixel_acc@" << e << ",";
    row << pixel_acc.at(e) << ",";
  }
  for (double e : epsilons)
    for (int c = 0; c < 3; ++c) {
      head << "pixel_acc_" << names[c] << "@" << e << ",";
      row << pixel_acc_per_channel.at(e)[c] << ",";
    }
  head << "psnr_db,psnr_infinite,ssim,n_images,failures\n";
  row << psnr_db << "," << psnr_infinite << "," << ssim << "," << n_images << "," << failures << "\n";
  return head.str() + row.str();
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  for (double e : epsilons) {
    j["pixel_acc"][std::to_string(e)] = pixel_acc.at(e);
    j["pixel_acc_per_channel"][std::to_string(e)] = pixel_acc_per_channel.at(e);
  }
  j["psnr_db"] = psnr_db;
  j["psnr_infinite"] = psnr_infinite;
  j["ssim"] = ssim;
  j["n_images"] = n_images;
  j["failures"] = failures;
  return j;
}

MetricAccumulator::MetricAccumulator(std::vector<double> epsilons) : eps_(std::move(epsilons)) {
  for (double e : eps_) {
    acc_sum_[e] = 0;
    channel_sum_[e] = {0, 0, 0};
  }
}

void MetricAccumulator::add(const RgbImage<float>& pred, const RgbImage<float>& real) {
  for (double e : eps_) {
    acc_sum_[e] += pixel_accuracy(pred, real, static_cast<float>(e));
    const auto per = pixel_accuracy_per_channel(pred, real, static_cast<float>(e));
    for (int c = 0; c < 3; ++c) channel_sum_[e][c] += per[c];
  }
  // PSNR in double so that exact identities survive.
  RgbImage<double> pd, rd;
  for (int c = 0; c < 3; ++c) {
    pd.channels[c] = pred.channels[c].cast<double>();
    rd.channels[c] = real.channels[c].cast<double>();
  }
  const double p = psnr(pd, rd);
  if (std::isinf(p)) {
    ++psnr_inf_;
  } else {
    psnr_sum_ += p;
    ++psnr_finite_;
  }
  ssim_sum_ += ssim(pd, rd);
  ++n_;
}

MetricReport MetricAccumulator::report() const {
  MetricReport r;
  r.epsilons = eps_;
  const double n = n_ > 0 ? static_cast<double>(n_) : 1.0;
  for (double e : eps_) {
    r.pixel_acc[e] = acc_sum_.at(e) / n;
    for (int c = 0; c < 3; ++c) r.pixel_acc_per_channel[e][c] = channel_sum_.at(e)[c] / n;
  }
  r.psnr_db = psnr_finite_ > 0 ? psnr_sum_ / static_cast<double>(psnr_finite_)
                               : std::numeric_limits<double>::infinity();
  r.psnr_infinite = psnr_inf_;
  r.ssim = ssim_sum_ / n;
  r.n_images = n_;
  r.failures = failures_;
  return r;
}

MetricReport evaluate(const Colorizer& model, const std::vector<RgbImage<float>>& truth,
                      const EvaluateOptions& options) {
  MetricAccumulator acc(options.epsilons);
  const Index total = static_cast<Index>(truth.size());
  for (Index start = 0; start < total; start += options.batch_size) {
    const Index end = std::min(total, start + options.batch_size);
    std::vector<Plane<float>> lightness;
    for (Index i = start; i < end; ++i) lightness.push_back(rgb_to_lab(truth[i]).L);
    std::vector<RgbImage<float>> preds;
    try {
      preds = model(lightness);
    } catch (const std::exception&) {
      preds.clear();
    }
    if (static_cast<Index>(preds.size()) != end - start) {
      for (Index i = start; i < end; ++i) acc.add_failure();
      continue;
    }
    for (Index i = start; i < end; ++i) {
      RgbImage<float> p = options.quantize ? quantize_8bit(preds[i - start]) : preds[i - start];
      if (options.on_prediction) options.on_prediction(i, p);
      acc.add(p, truth[i]);
    }
  }
  return acc.report();
}

MetricReport evaluate_predictions(const std::vector<RgbImage<float>>& predictions,
                                  const std::vector<RgbImage<float>>& truth, const EvaluateOptions& options) {
  if (predictions.size() != truth.size()) throw std::invalid_argument("evaluate_predictions: count mismatch");
  MetricAccumulator acc(options.epsilons);
  for (std::size_t i = 0; i < truth.size(); ++i)
    acc.add(options.quantize ? quantize_8bit(predictions[i]) : predictions[i], truth[i]);
  return acc.report();
}

Colorizer grayscale_colorizer() {
  return [](const std::vector<Plane<float>>& lightness) {
    std::vector<RgbImage<float>> out;
    for (const auto& L : lightness) {
      LabImage<float> lab;
      lab.L = L;
      lab.ab[0] = Plane<float>::Zero(L.rows(), L.cols());
      lab.ab[1] = Plane<float>::Zero(L.rows(), L.cols());
      out.push_back(lab_to_rgb(lab));
    }
    return out;
  };
}

}  // namespace colorlab
