#pragma once

#include "colorlab/checkpoint.hpp"
#include "colorlab/metrics.hpp"

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

namespace colorlab {

/// Input geometry the model cannot handle (e.g. not the trained image size).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A trained model ready for inference: either the classifier or the GAN
/// generator, plus what is needed to run it.
struct LoadedModel {
  std::string kind;  // "classifier" or "gan"
  std::unique_ptr<ClassifierNet<float>> classifier;
  std::unique_ptr<Generator<float>> generator;
  std::shared_ptr<const AbBinGrid> grid;
  Index image_size = 32;

  std::string label() const;  // "classification" / "gan"
};

/// Accepts classifier, GAN and generator-only checkpoints; verifies the bin
/// grid version of classifier checkpoints.
std::shared_ptr<LoadedModel> load_model(const Checkpoint& ckpt);
std::shared_ptr<LoadedModel> load_model(const std::filesystem::path& path);

/// Wraps the model as a Colorizer.  Rejects planes whose size differs from
/// the trained image size with ShapeError.
Colorizer make_colorizer(std::shared_ptr<LoadedModel> model, float temperature = 0.38f);

/// Colorizes a single image: keeps only its L channel.
RgbImage<float> colorize_image(const Colorizer& model, const RgbImage<float>& input);

/// Grayscale rendering of an image: its own L with a = b = 0.
RgbImage<float> grayscale_of(const RgbImage<float>& img);

}  // namespace colorlab
