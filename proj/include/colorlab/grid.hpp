#pragma once

#include "colorlab/color_space.hpp"

#include <string>
#include <vector>

namespace colorlab {

/// Pixel geometry of a comparison grid: a label band on top, then rows×cols
/// tiles separated by borders.
struct GridLayout {
  Index rows = 0;
  Index cols = 0;
  Index tile = 32;      // tile side after scaling
  Index border = 2;
  Index label_band = 0; // height of the caption band (0 = no captions)

  Index width() const { return cols * tile + (cols + 1) * border; }
  Index height() const { return label_band + rows * tile + (rows + 1) * border; }
  Index tile_x(Index col) const { return border + col * (tile + border); }
  Index tile_y(Index row) const { return label_band + border + row * (tile + border); }
};

/// Columns are grayscale input, each model's output (in the given order), then
/// ground truth.
struct GridRow {
  RgbImage<float> grayscale;
  std::vector<RgbImage<float>> outputs;
  RgbImage<float> truth;
};

struct GridOptions {
  Index scale = 4;   // nearest-neighbor magnification of each tile
  Index border = 2;
  bool labels = true;
};

/// Column captions: "grayscale", each model label, "ground truth".
std::vector<std::string> grid_column_labels(const std::vector<std::string>& model_labels);

GridLayout grid_layout(Index rows, Index cols, Index image_side, const GridOptions& options);

/// Renders the grid on a white background.  Throws std::invalid_argument when
/// rows disagree in column count or tile size.
RgbImage<float> render_grid(const std::vector<GridRow>& rows, const std::vector<std::string>& model_labels,
                            const GridOptions& options = {});

/// Draws upper-cased `text` with the built-in 5×7 font; unknown glyphs
/// render as blanks.  Each character advances 6·scale pixels.
void draw_text(RgbImage<float>& canvas, const std::string& text, Index x, Index y, Index scale, float value);
/// Inked width of `text`: 6·scale per character minus the trailing gap.
Index text_width(const std::string& text, Index scale);

}  // namespace colorlab
