#pragma once

#include "colorlab/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace colorlab {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// sRGB image with components normalized to [0,1].
template <typename Scalar>
struct RgbImage {
  std::array<Plane<Scalar>, 3> channels;

  RgbImage() = default;
  RgbImage(Index height, Index width) {
    for (auto& c : channels) c = Plane<Scalar>::Zero(height, width);
  }

  Index height() const { return channels[0].rows(); }
  Index width() const { return channels[0].cols(); }
  bool in_unit_range() const {
    for (const auto& c : channels)
      if ((c < Scalar(0)).any() || (c > Scalar(1)).any()) return false;
    return true;
  }
};

/// Chroma planes (a, b).
template <typename Scalar>
using AbField = std::array<Plane<Scalar>, 2>;

template <typename Scalar>
struct LabImage {
  Plane<Scalar> L;  // [0, 100]
  AbField<Scalar> ab;

  Index height() const { return L.rows(); }
  Index width() const { return L.cols(); }
};

/// D65 / 2° observer, same constants as the common scientific Python stack.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> rgb_to_lab(const Eigen::Matrix<Scalar, 3, 1>& rgb);
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> lab_to_rgb_unclamped(const Eigen::Matrix<Scalar, 3, 1>& lab);

template <typename Scalar>
LabImage<Scalar> rgb_to_lab(const RgbImage<Scalar>& img);

/// Converts back to sRGB and clamps each component into [0,1].  When
/// `out_of_gamut` is given it receives the number of pixels that needed
/// clamping.
template <typename Scalar>
RgbImage<Scalar> lab_to_rgb(const LabImage<Scalar>& img, Index* out_of_gamut = nullptr);

/// The quantized ab label set: centers on the multiples-of-10 lattice in
/// [-110,110]^2 that lie within one bin diagonal (10*sqrt(2)) of some 8-bit
/// sRGB color.  This yields exactly 313 centers and is a superset of the bins
/// actually hit by the sRGB cube (261 of them).
struct AbBinGrid {
  static constexpr int kBinSize = 10;
  static constexpr int kRange = 110;
  static constexpr Index kExpectedBins = 313;

  Eigen::Matrix<double, Eigen::Dynamic, 2> centers;  // rows ordered by (a, b)

  Index size() const { return centers.rows(); }
  /// FNV-1a over the integer center list; stored in checkpoints.
  std::uint64_t hash() const;
  std::string version() const;
  /// Index of the nearest center, lowest index on ties.
  Index nearest(double a, double b) const;
};

/// Computes the grid from an exhaustive sweep of the 8-bit sRGB cube.
/// Throws std::runtime_error if the sweep does not produce 313 centers.
AbBinGrid build_bin_grid();

/// Memoized build_bin_grid(); safe to call concurrently.
std::shared_ptr<const AbBinGrid> standard_bin_grid();

AbBinGrid read_bin_grid_csv(const std::filesystem::path& path);
void write_bin_grid_csv(const AbBinGrid& grid, const std::filesystem::path& path);

/// Per-pixel distribution over the grid's bins.  probs is Q × P, one column
/// per pixel, pixel order (n, y, x) as in Tensor.
template <typename Scalar>
struct ColorDistribution {
  RowMatrix<Scalar> probs;
  Index batch = 1;
  Index height = 0;
  Index width = 0;
  std::shared_ptr<const AbBinGrid> grid;

  Index pixels() const { return probs.cols(); }
};

/// ab is a 2 × P matrix (row 0 = a, row 1 = b).  Each pixel gets a Gaussian
/// weighted distribution over its k nearest centers.
template <typename Scalar>
ColorDistribution<Scalar> encode_soft(const RowMatrix<Scalar>& ab, Index batch, Index height,
                                      Index width, std::shared_ptr<const AbBinGrid> grid, int k,
                                      Scalar sigma);

template <typename Scalar>
ColorDistribution<Scalar> encode_soft(const AbField<Scalar>& ab, std::shared_ptr<const AbBinGrid> grid,
                                      int k, Scalar sigma);

/// Annealed mean: sharpen with exponent 1/T, renormalize, take the expectation
/// over centers.  Returns 2 × P.  Throws std::domain_error on an all-zero pixel.
template <typename Scalar>
RowMatrix<Scalar> decode_annealed_mean(const ColorDistribution<Scalar>& dist, Scalar temperature);

/// Nearest center per pixel of a 2 × P ab matrix.
template <typename Scalar>
std::vector<Index> encode_hard(const RowMatrix<Scalar>& ab, const AbBinGrid& grid);

// Glue between planes and the 2 × P matrix layout.
template <typename Scalar>
RowMatrix<Scalar> ab_to_matrix(const AbField<Scalar>& ab);
template <typename Scalar>
AbField<Scalar> matrix_to_ab(const RowMatrix<Scalar>& m, Index height, Index width, Index sample = 0);

/// Mean-pools each ab plane by `factor` (dimensions must be divisible).
template <typename Scalar>
AbField<Scalar> average_pool(const AbField<Scalar>& ab, Index factor);

/// Bilinear resize (half-pixel centers, edge clamped).
template <typename Scalar>
Plane<Scalar> resize_bilinear(const Plane<Scalar>& p, Index height, Index width);

}  // namespace colorlab
