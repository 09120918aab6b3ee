#include "colorlab/colorize.hpp"

namespace colorlab {

std::string LoadedModel::label() const { return kind == "classifier" ? "classification" : "gan"; }

std::shared_ptr<LoadedModel> load_model(const Checkpoint& ckpt) {
  auto model = std::make_shared<LoadedModel>();
  const std::string kind = ckpt.model();
  if (kind == "classifier") {
    model->grid = standard_bin_grid();
    check_grid(ckpt, *model->grid);
    model->classifier = load_classifier(ckpt);
    model->kind = "classifier";
    model->image_size = model->classifier->config().image_size;
  } else if (kind == "gan" || kind == "gan-generator") {
    model->generator = load_generator(ckpt);
    model->kind = "gan";
    model->image_size = model->generator->config().image_size;
  } else {
    throw CheckpointError("unknown model kind '" + kind + "'");
  }
  return model;
}

std::shared_ptr<LoadedModel> load_model(const std::filesystem::path& path) { return load_model(Checkpoint::load(path)); }

Colorizer make_colorizer(std::shared_ptr<LoadedModel> model, float temperature) {
  return [model, temperature](const std::vector<Plane<float>>& lightness) {
    for (const auto& L : lightness)
      if (L.rows() != model->image_size || L.cols() != model->image_size)
        throw ShapeError("model was trained on " + std::to_string(model->image_size) + "x" +
                         std::to_string(model->image_size) + " images, got " + std::to_string(L.rows()) + "x" +
                         std::to_string(L.cols()));
    if (model->kind == "classifier")
      return colorize_classifier(lightness, *model->classifier, model->grid, temperature);
    return colorize_gan(lightness, *model->generator);
  };
}

RgbImage<float> colorize_image(const Colorizer& model, const RgbImage<float>& input) {
  return model({rgb_to_lab(input).L}).front();
}

RgbImage<float> grayscale_of(const RgbImage<float>& img) { return grayscale_colorizer()({rgb_to_lab(img).L}).front(); }

}  // namespace colorlab
