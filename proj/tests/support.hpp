#pragma once

#include "colorlab/cifar.hpp"
#include "colorlab/color_space.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace colorlab::testing {

/// Smooth multi-frequency probe; the same image was used to pin the SSIM
/// reference values.
inline RgbImage<double> probe_image(Index side = 32) {
  RgbImage<double> img(side, side);
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < side; ++y)
      for (Index x = 0; x < side; ++x)
        img.channels[c](y, x) = 0.5 + 0.35 * std::sin(0.3 * x + 0.7 * c) * std::cos(0.2 * y - 0.4 * c) +
                                0.1 * std::sin(0.05 * x * y + c);
  return img;
}

template <typename To, typename From>
RgbImage<To> cast_image(const RgbImage<From>& img) {
  RgbImage<To> out;
  for (int c = 0; c < 3; ++c) out.channels[c] = img.channels[c].template cast<To>();
  return out;
}

/// Natural-looking synthetic image: a tinted gradient plus a few soft colored
/// blobs.  Deterministic in `seed`.
inline RgbImage<float> synthetic_image(std::uint64_t seed, Index side = 32) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RgbImage<float> img(side, side);
  float base[3], grad[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.2f + 0.6f * u(rng);
    grad[c] = 0.4f * (u(rng) - 0.5f);
  }
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < side; ++y)
      for (Index x = 0; x < side; ++x) img.channels[c](y, x) = base[c] + grad[c] * (float(y) / side - 0.5f);
  const int blobs = 2 + static_cast<int>(rng() % 3);
  for (int b = 0; b < blobs; ++b) {
    const float cx = u(rng) * side, cy = u(rng) * side, r = (0.1f + 0.25f * u(rng)) * side;
    float color[3];
    for (float& c : color) c = u(rng);
    for (Index y = 0; y < side; ++y)
      for (Index x = 0; x < side; ++x) {
        const float d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const float w = std::exp(-d2 / (2 * r * r));
        for (int c = 0; c < 3; ++c) img.channels[c](y, x) = (1 - w) * img.channels[c](y, x) + w * color[c];
      }
  }
  for (auto& c : img.channels) c = c.max(0.0f).min(1.0f);
  return img;
}

inline Sample to_sample(const RgbImage<float>& img, int label, Index index) {
  Sample s;
  s.label = label;
  s.index = index;
  const std::size_t plane = kCifarSide * kCifarSide;
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < kCifarSide; ++y)
      for (Index x = 0; x < kCifarSide; ++x)
        s.pixels[c * plane + y * kCifarSide + x] =
            static_cast<std::uint8_t>(std::lround(img.channels[c](y, x) * 255.0f));
  return s;
}

/// A miniature CIFAR-10 tree (same binary format, fewer records):
/// `per_file` records in each of the five training files and the test file,
/// labels cycling 0..9.
inline void write_fixture_dataset(const std::filesystem::path& root, Index per_file, std::uint64_t seed = 1) {
  const auto dir = root / kCifarBatchDir;
  Index index = 0;
  auto make = [&](const std::string& name) {
    std::vector<Sample> samples;
    for (Index i = 0; i < per_file; ++i, ++index)
      samples.push_back(to_sample(synthetic_image(seed * 100003 + index), static_cast<int>(index % 10), i));
    write_cifar_file(dir / name, samples);
  };
  for (int f = 1; f <= 5; ++f) make("data_batch_" + std::to_string(f) + ".bin");
  make("test_batch.bin");
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("colorlab_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Minimal ustar + gzip writer for archive fixtures.
inline void write_tar_gz(const std::filesystem::path& archive,
                         const std::vector<std::pair<std::string, std::string>>& entries) {
  gzFile gz = gzopen(archive.c_str(), "wb");
  auto put = [&](const void* data, std::size_t n) { gzwrite(gz, data, static_cast<unsigned>(n)); };
  for (const auto& [name, body] : entries) {
    char header[512] = {0};
    std::snprintf(header, 100, "%s", name.c_str());
    std::snprintf(header + 100, 8, "%07o", 0644);
    std::snprintf(header + 108, 8, "%07o", 0);
    std::snprintf(header + 116, 8, "%07o", 0);
    std::snprintf(header + 124, 12, "%011o", static_cast<unsigned>(body.size()));
    std::snprintf(header + 136, 12, "%011o", 0);
    header[156] = '0';
    std::memcpy(header + 257, "ustar", 5);
    std::memcpy(header + 263, "00", 2);
    std::memset(header + 148, ' ', 8);
    unsigned sum = 0;
    for (unsigned char ch : header) sum += ch;
    std::snprintf(header + 148, 8, "%06o", sum);
    put(header, 512);
    put(body.data(), body.size());
    const std::size_t pad = (512 - body.size() % 512) % 512;
    const std::vector<char> zeros(pad + 1024, 0);
    put(zeros.data(), pad);
  }
  const std::vector<char> end(1024, 0);
  put(end.data(), end.size());
  gzclose(gz);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace colorlab::testing
