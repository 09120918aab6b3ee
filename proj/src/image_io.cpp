#include "colorlab/image_io.hpp"

#include <png.h>

#include <cmath>
#include <vector>

namespace colorlab {
namespace {

std::uint8_t to_byte(float v) {
  if (!(v > 0.0f)) return 0;  // also catches NaN
  if (v >= 1.0f) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0f));
}

void write_image(const std::filesystem::path& path, png_uint_32 width, png_uint_32 height, png_uint_32 format,
                 const std::vector<std::uint8_t>& buffer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = width;
  image.height = height;
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageError("cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace

RgbImage<float> read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw ImageError("cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageError("cannot decode " + path.string() + ": " + msg);
  }
  const Index h = image.height, w = image.width;
  RgbImage<float> out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.channels[c](y, x) = buffer[(y * w + x) * 3 + c] / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage<float>& img) {
  const Index h = img.height(), w = img.width();
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h * w * 3));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) buffer[(y * w + x) * 3 + c] = to_byte(img.channels[c](y, x));
  write_image(path, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), PNG_FORMAT_RGB, buffer);
}

void write_png_gray(const std::filesystem::path& path, const Plane<float>& gray) {
  const Index h = gray.rows(), w = gray.cols();
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h * w));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) buffer[y * w + x] = to_byte(gray(y, x));
  write_image(path, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), PNG_FORMAT_GRAY, buffer);
}

}  // namespace colorlab
