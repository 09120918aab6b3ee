#include "colorlab/color_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace colorlab {
namespace {

const Eigen::Matrix3d& xyz_from_rgb() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.412453, 0.357580, 0.180423,  //
                                    0.212671, 0.715160, 0.072169,                      //
                                    0.019334, 0.119193, 0.950227)
                                       .finished();
  return m;
}

const Eigen::Matrix3d& rgb_from_xyz() {
  static const Eigen::Matrix3d m = xyz_from_rgb().inverse();
  return m;
}

constexpr double kWhite[3] = {0.95047, 1.0, 1.08883};
constexpr double kEpsilon = 0.008856;
constexpr double kKappaSlope = 7.787;

template <typename Scalar>
Scalar srgb_to_linear(Scalar c) {
  return c > Scalar(0.04045) ? std::pow((c + Scalar(0.055)) / Scalar(1.055), Scalar(2.4))
                             : c / Scalar(12.92);
}

template <typename Scalar>
Scalar linear_to_srgb(Scalar c) {
  return c > Scalar(0.0031308) ? Scalar(1.055) * std::pow(c, Scalar(1) / Scalar(2.4)) - Scalar(0.055)
                               : Scalar(12.92) * c;
}

template <typename Scalar>
Scalar lab_f(Scalar t) {
  return t > Scalar(kEpsilon) ? std::cbrt(t) : Scalar(kKappaSlope) * t + Scalar(16.0 / 116.0);
}

template <typename Scalar>
Scalar lab_f_inv(Scalar f) {
  return f > Scalar(0.2068966) ? f * f * f : (f - Scalar(16.0 / 116.0)) / Scalar(kKappaSlope);
}

constexpr double kGamutTolerance = 1e-6;

}  // namespace

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> rgb_to_lab(const Eigen::Matrix<Scalar, 3, 1>& rgb) {
  Eigen::Matrix<Scalar, 3, 1> lin;
  for (int i = 0; i < 3; ++i) lin[i] = srgb_to_linear(rgb[i]);
  const Eigen::Matrix<Scalar, 3, 1> xyz = xyz_from_rgb().cast<Scalar>() * lin;
  const Scalar fx = lab_f(xyz[0] / Scalar(kWhite[0]));
  const Scalar fy = lab_f(xyz[1] / Scalar(kWhite[1]));
  const Scalar fz = lab_f(xyz[2] / Scalar(kWhite[2]));
  return {Scalar(116) * fy - Scalar(16), Scalar(500) * (fx - fy), Scalar(200) * (fy - fz)};
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> lab_to_rgb_unclamped(const Eigen::Matrix<Scalar, 3, 1>& lab) {
  const Scalar fy = (lab[0] + Scalar(16)) / Scalar(116);
  const Scalar fx = fy + lab[1] / Scalar(500);
  Scalar fz = fy - lab[2] / Scalar(200);
  if (fz < Scalar(0)) fz = Scalar(0);
  const Eigen::Matrix<Scalar, 3, 1> xyz(lab_f_inv(fx) * Scalar(kWhite[0]), lab_f_inv(fy) * Scalar(kWhite[1]),
                                        lab_f_inv(fz) * Scalar(kWhite[2]));
  const Eigen::Matrix<Scalar, 3, 1> lin = rgb_from_xyz().cast<Scalar>() * xyz;
  Eigen::Matrix<Scalar, 3, 1> rgb;
  for (int i = 0; i < 3; ++i) rgb[i] = linear_to_srgb(lin[i]);
  return rgb;
}

template <typename Scalar>
LabImage<Scalar> rgb_to_lab(const RgbImage<Scalar>& img) {
  const Index h = img.height(), w = img.width();
  LabImage<Scalar> out;
  out.L.resize(h, w);
  out.ab[0].resize(h, w);
  out.ab[1].resize(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const auto lab = rgb_to_lab<Scalar>({img.channels[0](y, x), img.channels[1](y, x), img.channels[2](y, x)});
      out.L(y, x) = std::clamp(lab[0], Scalar(0), Scalar(100));
      out.ab[0](y, x) = lab[1];
      out.ab[1](y, x) = lab[2];
    }
  return out;
}

template <typename Scalar>
RgbImage<Scalar> lab_to_rgb(const LabImage<Scalar>& img, Index* out_of_gamut) {
  const Index h = img.height(), w = img.width();
  if (img.ab[0].rows() != h || img.ab[0].cols() != w || img.ab[1].rows() != h || img.ab[1].cols() != w)
    throw std::invalid_argument("lab_to_rgb: L and ab dimensions differ");
  RgbImage<Scalar> out(h, w);
  Index clamped = 0;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const auto rgb = lab_to_rgb_unclamped<Scalar>({img.L(y, x), img.ab[0](y, x), img.ab[1](y, x)});
      bool outside = false;
      for (int c = 0; c < 3; ++c) {
        const Scalar v = rgb[c];
        if (!(v >= Scalar(-kGamutTolerance) && v <= Scalar(1 + kGamutTolerance))) outside = true;
        out.channels[c](y, x) = std::isnan(v) ? Scalar(0) : std::clamp(v, Scalar(0), Scalar(1));
      }
      clamped += outside ? 1 : 0;
    }
  if (out_of_gamut) *out_of_gamut = clamped;
  return out;
}

// ---------------------------------------------------------------------------
// Bin grid

std::uint64_t AbBinGrid::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (Index i = 0; i < size(); ++i)
    for (int j = 0; j < 2; ++j) {
      const auto v = static_cast<std::int32_t>(std::lround(centers(i, j)));
      for (int byte = 0; byte < 4; ++byte) {
        h ^= static_cast<std::uint8_t>(static_cast<std::uint32_t>(v) >> (8 * byte));
        h *= 1099511628211ULL;
      }
    }
  return h;
}

std::string AbBinGrid::version() const {
  std::ostringstream os;
  os << "ab-grid-v1-q" << size() << "-" << std::hex << std::setw(16) << std::setfill('0') << hash();
  return os.str();
}

Index AbBinGrid::nearest(double a, double b) const {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index q = 0; q < size(); ++q) {
    const double da = a - centers(q, 0), db = b - centers(q, 1);
    const double d = da * da + db * db;
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  return best;
}

AbBinGrid build_bin_grid() {
  constexpr int kSide = 2 * AbBinGrid::kRange / AbBinGrid::kBinSize + 1;  // 23 centers per axis
  constexpr double kMaxDist2 = 2.0 * AbBinGrid::kBinSize * AbBinGrid::kBinSize;
  std::array<double, 256> lin{};
  for (int v = 0; v < 256; ++v) lin[v] = srgb_to_linear(v / 255.0);

  std::array<bool, kSide * kSide> keep{};
  const Eigen::Matrix3d& m = xyz_from_rgb();
  for (int r = 0; r < 256; ++r)
    for (int g = 0; g < 256; ++g)
      for (int b = 0; b < 256; ++b) {
        const Eigen::Vector3d xyz = m * Eigen::Vector3d(lin[r], lin[g], lin[b]);
        const double fx = lab_f(xyz[0] / kWhite[0]);
        const double fy = lab_f(xyz[1] / kWhite[1]);
        const double fz = lab_f(xyz[2] / kWhite[2]);
        const double ca = 500.0 * (fx - fy), cb = 200.0 * (fy - fz);
        const int ia = static_cast<int>(std::floor((ca + AbBinGrid::kRange) / AbBinGrid::kBinSize));
        const int ib = static_cast<int>(std::floor((cb + AbBinGrid::kRange) / AbBinGrid::kBinSize));
        for (int i = std::max(0, ia - 1); i <= std::min(kSide - 1, ia + 2); ++i)
          for (int j = std::max(0, ib - 1); j <= std::min(kSide - 1, ib + 2); ++j) {
            bool& k = keep[i * kSide + j];
            if (k) continue;
            const double da = ca - (i * AbBinGrid::kBinSize - AbBinGrid::kRange);
            const double db = cb - (j * AbBinGrid::kBinSize - AbBinGrid::kRange);
            if (da * da + db * db <= kMaxDist2) k = true;
          }
      }

  AbBinGrid grid;
  const auto count = std::count(keep.begin(), keep.end(), true);
  grid.centers.resize(count, 2);
  Index row = 0;
  for (int i = 0; i < kSide; ++i)
    for (int j = 0; j < kSide; ++j)
      if (keep[i * kSide + j]) {
        grid.centers(row, 0) = i * AbBinGrid::kBinSize - AbBinGrid::kRange;
        grid.centers(row, 1) = j * AbBinGrid::kBinSize - AbBinGrid::kRange;
        ++row;
      }
  if (grid.size() != AbBinGrid::kExpectedBins)
    throw std::runtime_error("build_bin_grid: gamut sweep produced " + std::to_string(grid.size()) +
                             " bins, expected 313");
  return grid;
}

std::shared_ptr<const AbBinGrid> standard_bin_grid() {
  static const std::shared_ptr<const AbBinGrid> grid = std::make_shared<const AbBinGrid>(build_bin_grid());
  return grid;
}

AbBinGrid read_bin_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open bin grid asset " + path.string());
  std::vector<std::pair<int, int>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int a = 0, b = 0;
    char comma = 0;
    if (!(ls >> a >> comma >> b) || comma != ',')
      throw std::runtime_error("malformed bin grid row: " + line);
    rows.emplace_back(a, b);
  }
  AbBinGrid grid;
  grid.centers.resize(static_cast<Index>(rows.size()), 2);
  for (Index i = 0; i < grid.size(); ++i) {
    grid.centers(i, 0) = rows[i].first;
    grid.centers(i, 1) = rows[i].second;
  }
  return grid;
}

void write_bin_grid_csv(const AbBinGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# Quantized ab bin centers, " << grid.size() << " rows of \"a,b\".\n"
      << "# Lattice: bin size 10, centers at multiples of 10 within [-110,110].\n"
      << "# Kept: centers within 10*sqrt(2) (one bin diagonal) of the ab coordinates of\n"
      << "# some 8-bit sRGB color, converted with D65 white / 2-degree observer.\n"
      << "# version " << grid.version() << "\n";
  for (Index i = 0; i < grid.size(); ++i)
    out << std::lround(grid.centers(i, 0)) << "," << std::lround(grid.centers(i, 1)) << "\n";
}

// ---------------------------------------------------------------------------
// Soft / hard encoding and decoding

template <typename Scalar>
ColorDistribution<Scalar> encode_soft(const RowMatrix<Scalar>& ab, Index batch, Index height, Index width,
                                      std::shared_ptr<const AbBinGrid> grid, int k, Scalar sigma) {
  if (ab.rows() != 2 || ab.cols() != batch * height * width)
    throw std::invalid_argument("encode_soft: ab must be 2 x (batch*height*width)");
  if (k < 1 || !(sigma > Scalar(0))) throw std::invalid_argument("encode_soft: need k >= 1 and sigma > 0");
  const Index q_count = grid->size();
  const int kk = static_cast<int>(std::min<Index>(k, q_count));
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 2> centers = grid->centers.cast<Scalar>();

  ColorDistribution<Scalar> out;
  out.probs = RowMatrix<Scalar>::Zero(q_count, ab.cols());
  out.batch = batch;
  out.height = height;
  out.width = width;
  out.grid = grid;

  std::vector<Scalar> best_d(kk);
  std::vector<Index> best_q(kk);
  const Scalar inv_two_sigma2 = Scalar(1) / (Scalar(2) * sigma * sigma);
  for (Index p = 0; p < ab.cols(); ++p) {
    const Scalar a = ab(0, p), b = ab(1, p);
    int filled = 0;
    for (Index q = 0; q < q_count; ++q) {
      const Scalar da = a - centers(q, 0), db = b - centers(q, 1);
      const Scalar d = da * da + db * db;
      if (filled == kk && d >= best_d[kk - 1]) continue;
      int pos = filled < kk ? filled++ : kk - 1;
      while (pos > 0 && best_d[pos - 1] > d) {
        best_d[pos] = best_d[pos - 1];
        best_q[pos] = best_q[pos - 1];
        --pos;
      }
      best_d[pos] = d;
      best_q[pos] = q;
    }
    Scalar total = 0;
    for (int i = 0; i < kk; ++i) {
      const Scalar wgt = std::exp(-(best_d[i] - best_d[0]) * inv_two_sigma2);
      out.probs(best_q[i], p) = wgt;
      total += wgt;
    }
    for (int i = 0; i < kk; ++i) out.probs(best_q[i], p) /= total;
  }
  return out;
}

template <typename Scalar>
ColorDistribution<Scalar> encode_soft(const AbField<Scalar>& ab, std::shared_ptr<const AbBinGrid> grid, int k,
                                      Scalar sigma) {
  return encode_soft<Scalar>(ab_to_matrix(ab), 1, ab[0].rows(), ab[0].cols(), std::move(grid), k, sigma);
}

template <typename Scalar>
RowMatrix<Scalar> decode_annealed_mean(const ColorDistribution<Scalar>& dist, Scalar temperature) {
  if (!(temperature > Scalar(0))) throw std::invalid_argument("decode_annealed_mean: temperature must be > 0");
  if (!dist.grid || dist.probs.rows() != dist.grid->size())
    throw std::invalid_argument("decode_annealed_mean: distribution does not match its grid");
  const RowMatrix<Scalar> col_max = dist.probs.colwise().maxCoeff();
  if ((col_max.array() <= Scalar(0)).any() || !col_max.allFinite())
    throw std::domain_error("decode_annealed_mean: all-zero or non-finite pixel distribution");
  RowMatrix<Scalar> sharpened;
  if (temperature == Scalar(1)) {
    sharpened = dist.probs;
  } else {
    sharpened = (dist.probs.array().rowwise() / col_max.row(0).array()).pow(Scalar(1) / temperature).matrix();
  }
  const RowMatrix<Scalar> norm = sharpened.colwise().sum();
  sharpened.array().rowwise() /= norm.row(0).array();
  const RowMatrix<Scalar> centers_t = dist.grid->centers.transpose().template cast<Scalar>();
  return centers_t * sharpened;
}

template <typename Scalar>
std::vector<Index> encode_hard(const RowMatrix<Scalar>& ab, const AbBinGrid& grid) {
  if (ab.rows() != 2) throw std::invalid_argument("encode_hard: ab must have 2 rows");
  std::vector<Index> out(ab.cols());
  for (Index p = 0; p < ab.cols(); ++p) out[p] = grid.nearest(ab(0, p), ab(1, p));
  return out;
}

template <typename Scalar>
RowMatrix<Scalar> ab_to_matrix(const AbField<Scalar>& ab) {
  const Index n = ab[0].size();
  RowMatrix<Scalar> m(2, n);
  m.row(0) = Eigen::Map<const RowMatrix<Scalar>>(ab[0].data(), 1, n);
  m.row(1) = Eigen::Map<const RowMatrix<Scalar>>(ab[1].data(), 1, n);
  return m;
}

template <typename Scalar>
AbField<Scalar> matrix_to_ab(const RowMatrix<Scalar>& m, Index height, Index width, Index sample) {
  AbField<Scalar> ab;
  const Index offset = sample * height * width;
  for (int c = 0; c < 2; ++c)
    ab[c] = Eigen::Map<const Plane<Scalar>>(m.row(c).data() + offset, height, width);
  return ab;
}

template <typename Scalar>
AbField<Scalar> average_pool(const AbField<Scalar>& ab, Index factor) {
  const Index h = ab[0].rows(), w = ab[0].cols();
  if (factor < 1 || h % factor != 0 || w % factor != 0)
    throw std::invalid_argument("average_pool: size not divisible by factor");
  AbField<Scalar> out;
  for (int c = 0; c < 2; ++c) {
    out[c].resize(h / factor, w / factor);
    for (Index y = 0; y < h / factor; ++y)
      for (Index x = 0; x < w / factor; ++x)
        out[c](y, x) = ab[c].block(y * factor, x * factor, factor, factor).mean();
  }
  return out;
}

template <typename Scalar>
Plane<Scalar> resize_bilinear(const Plane<Scalar>& p, Index height, Index width) {
  const RowMatrix<Scalar> rows = bilinear_matrix<Scalar>(p.rows(), height);
  const RowMatrix<Scalar> cols = bilinear_matrix<Scalar>(p.cols(), width);
  return (rows * p.matrix() * cols.transpose()).array();
}

#define COLORLAB_INSTANTIATE(S)                                                                              \
  template Eigen::Matrix<S, 3, 1> rgb_to_lab<S>(const Eigen::Matrix<S, 3, 1>&);                             \
  template Eigen::Matrix<S, 3, 1> lab_to_rgb_unclamped<S>(const Eigen::Matrix<S, 3, 1>&);                   \
  template LabImage<S> rgb_to_lab<S>(const RgbImage<S>&);                                                    \
  template RgbImage<S> lab_to_rgb<S>(const LabImage<S>&, Index*);                                            \
  template ColorDistribution<S> encode_soft<S>(const RowMatrix<S>&, Index, Index, Index,                     \
                                               std::shared_ptr<const AbBinGrid>, int, S);                    \
  template ColorDistribution<S> encode_soft<S>(const AbField<S>&, std::shared_ptr<const AbBinGrid>, int, S); \
  template RowMatrix<S> decode_annealed_mean<S>(const ColorDistribution<S>&, S);                             \
  template std::vector<Index> encode_hard<S>(const RowMatrix<S>&, const AbBinGrid&);                         \
  template RowMatrix<S> ab_to_matrix<S>(const AbField<S>&);                                                  \
  template AbField<S> matrix_to_ab<S>(const RowMatrix<S>&, Index, Index, Index);                             \
  template AbField<S> average_pool<S>(const AbField<S>&, Index);                                             \
  template Plane<S> resize_bilinear<S>(const Plane<S>&, Index, Index);

COLORLAB_INSTANTIATE(float)
COLORLAB_INSTANTIATE(double)
#undef COLORLAB_INSTANTIATE

}  // namespace colorlab
