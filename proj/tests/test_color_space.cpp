#include "colorlab/color_space.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace colorlab;
using Vec3 = Eigen::Vector3d;

namespace {

// Reference values from scikit-image's rgb2lab (D65, 2° observer).
struct Golden {
  Vec3 rgb, lab;
};
const Golden kGoldens[] = {
    {{1, 0, 0}, {53.2405879437, 80.0923082257, 67.2027510444}},
    {{0, 1, 0}, {87.7350994883, -86.1830297444, 83.1797031754}},
    {{0, 0, 1}, {32.295672565, 79.1855909118, -107.8573002067}},
    {{0.5, 0.5, 0.5}, {53.388964741, -1.4684965238e-03, 2.7835868654e-03}},
    {{0.2, 0.6, 0.9}, {60.9295320289, -3.0601553174, -46.8376536377}},
};

const double kHalfDiagonal = 5.0 * std::sqrt(2.0);

RowMatrix<double> ab_column(double a, double b) {
  RowMatrix<double> m(2, 1);
  m << a, b;
  return m;
}

}  // namespace

TEST_CASE("rgb_to_lab matches reference values") {
  for (const auto& g : kGoldens) {
    const Vec3 lab = rgb_to_lab<double>(g.rgb);
    for (int i = 0; i < 3; ++i) CHECK(lab[i] == doctest::Approx(g.lab[i]).epsilon(1e-8));
    const Vec3 back = lab_to_rgb_unclamped<double>(g.lab);
    for (int i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(g.rgb[i]).epsilon(1e-8));
  }
}

TEST_CASE("white and black land on the achromatic axis") {
  const Vec3 white = rgb_to_lab<double>(Vec3(1, 1, 1));
  CHECK(white[0] == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(std::abs(white[1]) < 0.5);
  CHECK(std::abs(white[2]) < 0.5);
  const Vec3 black = rgb_to_lab<double>(Vec3(0, 0, 0));
  CHECK(black.cwiseAbs().maxCoeff() < 1e-9);

  LabImage<double> lab;
  lab.L = Plane<double>::Constant(2, 2, 100);
  lab.ab = {Plane<double>::Zero(2, 2), Plane<double>::Zero(2, 2)};
  const auto rgb = lab_to_rgb(lab);
  for (const auto& c : rgb.channels) CHECK((c - 1.0).abs().maxCoeff() <= 1.0 / 255);
}

TEST_CASE("Lab round trip stays within one 8-bit level") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  RgbImage<double> img(100, 100);
  for (auto& c : img.channels)
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  const auto back = lab_to_rgb(rgb_to_lab(img));
  double worst = 0;
  for (int c = 0; c < 3; ++c) worst = std::max(worst, (back.channels[c] - img.channels[c]).abs().maxCoeff());
  CHECK(worst <= 1.0 / 255);
  CHECK(worst < 1e-9);  // the inverse is exact up to rounding

  const auto f = rgb_to_lab(testing::cast_image<float>(img));
  CHECK(f.L.minCoeff() >= 0.0f);
  CHECK(f.L.maxCoeff() <= 100.0f);
}

TEST_CASE("out-of-gamut Lab is clamped and counted") {
  LabImage<double> lab;
  lab.L = Plane<double>::Constant(3, 3, 50);
  lab.ab = {Plane<double>::Constant(3, 3, 110), Plane<double>::Constant(3, 3, -110)};
  lab.ab[0](0, 0) = 0;
  lab.ab[1](0, 0) = 0;
  Index clamped = 0;
  const auto rgb = lab_to_rgb(lab, &clamped);
  CHECK(rgb.in_unit_range());
  CHECK(clamped == 8);
}

TEST_CASE("bin grid: 313 unique lattice centers, matching the shipped asset") {
  const auto grid = standard_bin_grid();
  REQUIRE(grid->size() == 313);
  std::set<std::pair<int, int>> seen;
  for (Index q = 0; q < grid->size(); ++q) {
    const double a = grid->centers(q, 0), b = grid->centers(q, 1);
    CHECK(std::fmod(std::abs(a), 10.0) == 0.0);
    CHECK(std::fmod(std::abs(b), 10.0) == 0.0);
    CHECK(std::abs(a) <= 110);
    CHECK(std::abs(b) <= 110);
    seen.insert({int(a), int(b)});
  }
  CHECK(seen.size() == 313);

  const AbBinGrid asset = read_bin_grid_csv(std::filesystem::path(COLORLAB_DATA_ASSET_DIR) / "ab_bins_v1.csv");
  CHECK(asset.centers == grid->centers);
  CHECK(asset.version() == grid->version());
  CHECK(grid->version() == "ab-grid-v1-q313-53ce259b8231d2d9");

  const auto dir = testing::scratch_dir("grid_csv");
  write_bin_grid_csv(*grid, dir / "grid.csv");
  CHECK(read_bin_grid_csv(dir / "grid.csv").centers == grid->centers);
}

TEST_CASE("bin grid construction is deterministic") {
  const AbBinGrid a = build_bin_grid();
  const AbBinGrid b = build_bin_grid();
  CHECK(a.centers == b.centers);
  CHECK(a.hash() == b.hash());
}

TEST_CASE("origin's nearest center is within half a bin diagonal") {
  const auto grid = standard_bin_grid();
  const Index q = grid->nearest(0, 0);
  CHECK(std::hypot(grid->centers(q, 0), grid->centers(q, 1)) <= kHalfDiagonal);
}

TEST_CASE("stratified 64^3 sRGB sweep finds no occupied bin outside the grid") {
  const auto grid = standard_bin_grid();
  std::set<std::pair<int, int>> members;
  for (Index q = 0; q < grid->size(); ++q) members.insert({int(grid->centers(q, 0)), int(grid->centers(q, 1))});
  Index missing = 0;
  for (int r = 0; r < 64; ++r)
    for (int g = 0; g < 64; ++g)
      for (int b = 0; b < 64; ++b) {
        const Vec3 lab = rgb_to_lab<double>(Vec3(r * 4 + 2, g * 4 + 2, b * 4 + 2) / 255.0);
        const int ca = 10 * int(std::lround(lab[1] / 10)), cb = 10 * int(std::lround(lab[2] / 10));
        if (!members.count({ca, cb})) ++missing;
      }
  CHECK(missing == 0);
}

TEST_CASE("encode_soft: one-hot at a center with k=1") {
  const auto grid = standard_bin_grid();
  const Index q = 100;
  const auto dist = encode_soft<double>(ab_column(grid->centers(q, 0), grid->centers(q, 1)), 1, 1, 1, grid, 1, 5.0);
  CHECK(dist.probs(q, 0) == 1.0);
  CHECK(dist.probs.sum() == 1.0);
}

TEST_CASE("encode_soft yields valid distributions with at most k nonzeros") {
  const auto grid = standard_bin_grid();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100, 100);
  RowMatrix<double> ab(2, 500);
  for (Index i = 0; i < ab.size(); ++i) ab.data()[i] = u(rng);
  for (int k : {1, 3, 5, 8}) {
    const auto dist = encode_soft<double>(ab, 1, 20, 25, grid, k, 5.0);
    CHECK(dist.probs.rows() == 313);
    CHECK(dist.probs.minCoeff() >= 0);
    for (Index p = 0; p < dist.pixels(); ++p) {
      CHECK(std::abs(dist.probs.col(p).sum() - 1.0) < 1e-5);
      CHECK((dist.probs.col(p).array() > 0).count() <= k);
    }
  }
}

TEST_CASE("encode_soft: equidistant point splits the top weight evenly") {
  const auto grid = standard_bin_grid();
  const auto dist = encode_soft<double>(ab_column(5, 0), 1, 1, 1, grid, 5, 5.0);
  const Index q0 = grid->nearest(0, 0), q1 = grid->nearest(10, 0);
  CHECK(dist.probs(q0, 0) == doctest::Approx(dist.probs(q1, 0)).epsilon(1e-12));
  CHECK(dist.probs(q0, 0) == doctest::Approx(dist.probs.col(0).maxCoeff()).epsilon(1e-12));
}

TEST_CASE("annealed mean: T=1 expectation, one-hot, uniform") {
  const auto grid = standard_bin_grid();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  ColorDistribution<double> dist;
  dist.grid = grid;
  dist.height = 1;
  dist.width = 4;
  dist.probs = RowMatrix<double>::Zero(313, 4);
  for (Index q = 0; q < 313; ++q) dist.probs(q, 0) = u(rng);
  dist.probs.col(0) /= dist.probs.col(0).sum();
  dist.probs(17, 1) = 1;
  dist.probs.col(2).setConstant(1.0 / 313);
  for (Index q = 0; q < 313; q += 7) dist.probs(q, 3) = u(rng) * u(rng);
  dist.probs.col(3) /= dist.probs.col(3).sum();

  const auto plain = decode_annealed_mean(dist, 1.0);
  for (Index p : {0, 3}) {
    double ea = 0, eb = 0;
    for (Index q = 0; q < 313; ++q) {
      ea += dist.probs(q, p) * grid->centers(q, 0);
      eb += dist.probs(q, p) * grid->centers(q, 1);
    }
    CHECK(std::abs(plain(0, p) - ea) < 1e-6);
    CHECK(std::abs(plain(1, p) - eb) < 1e-6);
  }

  const auto sharp = decode_annealed_mean(dist, 0.38);
  CHECK(sharp(0, 1) == grid->centers(17, 0));
  CHECK(sharp(1, 1) == grid->centers(17, 1));
  CHECK(sharp(0, 2) == doctest::Approx(grid->centers.col(0).mean()).epsilon(1e-12));
  CHECK(sharp(1, 2) == doctest::Approx(grid->centers.col(1).mean()).epsilon(1e-12));
}

TEST_CASE("annealed mean rejects an all-zero pixel") {
  ColorDistribution<double> dist;
  dist.grid = standard_bin_grid();
  dist.height = dist.width = 1;
  dist.probs = RowMatrix<double>::Zero(313, 1);
  CHECK_THROWS_AS(decode_annealed_mean(dist, 0.38), std::domain_error);
}

TEST_CASE("soft encode then annealed decode returns bin centers") {
  const auto grid = standard_bin_grid();
  RowMatrix<double> ab(2, grid->size());
  ab.row(0) = grid->centers.col(0).transpose();
  ab.row(1) = grid->centers.col(1).transpose();
  const auto dist = encode_soft<double>(ab, 1, 1, grid->size(), grid, 5, 5.0);
  const auto decoded = decode_annealed_mean(dist, 0.38);
  const auto hard_in = encode_hard(ab, *grid);
  const auto hard_out = encode_hard(decoded, *grid);
  double worst = 0;
  for (Index p = 0; p < ab.cols(); ++p) {
    worst = std::max(worst, (decoded.col(p) - ab.col(p)).norm());
    CHECK(hard_in[p] == p);
    CHECK(hard_out[p] == hard_in[p]);
  }
  CHECK(worst <= kHalfDiagonal);
}

TEST_CASE("encode_hard agrees with a brute-force argmin") {
  const auto grid = standard_bin_grid();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-110, 110);
  RowMatrix<double> ab(2, 2000);
  for (Index i = 0; i < ab.size(); ++i) ab.data()[i] = u(rng);
  const auto hard = encode_hard(ab, *grid);
  for (Index p = 0; p < ab.cols(); ++p) {
    Index best = 0;
    double best_d = HUGE_VAL;
    for (Index q = 0; q < grid->size(); ++q) {
      const double d = std::pow(ab(0, p) - grid->centers(q, 0), 2) + std::pow(ab(1, p) - grid->centers(q, 1), 2);
      if (d < best_d) {
        best_d = d;
        best = q;
      }
    }
    CHECK(hard[p] == best);
  }
}

TEST_CASE("average_pool and resize_bilinear") {
  AbField<double> ab{Plane<double>(4, 4), Plane<double>(4, 4)};
  for (Index y = 0; y < 4; ++y)
    for (Index x = 0; x < 4; ++x) {
      ab[0](y, x) = static_cast<double>(y * 4 + x);
      ab[1](y, x) = -1.0;
    }
  const auto pooled = average_pool(ab, 2);
  CHECK(pooled[0].rows() == 2);
  CHECK(pooled[0](0, 0) == doctest::Approx(2.5));
  CHECK(pooled[0](1, 1) == doctest::Approx(12.5));
  CHECK((pooled[1] + 1.0).abs().maxCoeff() == 0.0);

  const Plane<double> up = resize_bilinear(pooled[0], 4, 4);
  CHECK(up(0, 0) == doctest::Approx(2.5));
  CHECK(up(1, 1) == doctest::Approx(5.0));
  CHECK(up.mean() == doctest::Approx(pooled[0].mean()));
}
