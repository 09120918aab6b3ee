#pragma once

#include "colorlab/color_space.hpp"

#include <filesystem>
#include <stdexcept>

namespace colorlab {

struct ImageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Decodes any PNG (gray, palette, RGB, with or without alpha, 8 or 16 bit)
/// to 8-bit sRGB normalized to [0,1].  Gray inputs give three equal channels;
/// transparent pixels are composited onto black.
RgbImage<float> read_png(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG; values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const RgbImage<float>& img);

/// Writes an 8-bit single-channel PNG from values in [0,1].
void write_png_gray(const std::filesystem::path& path, const Plane<float>& gray);

}  // namespace colorlab
