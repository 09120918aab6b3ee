#include "colorlab/grid.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <stdexcept>

namespace colorlab {
namespace {

using Glyph = std::array<std::uint8_t, 7>;  // rows top to bottom, bit 4 = leftmost column

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> glyphs{
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
  };
  return glyphs;
}

constexpr Index kGlyphW = 5, kGlyphH = 7, kAdvance = 6;

void blit(RgbImage<float>& canvas, const RgbImage<float>& img, Index x0, Index y0, Index scale) {
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < img.height() * scale; ++y)
      for (Index x = 0; x < img.width() * scale; ++x)
        canvas.channels[c](y0 + y, x0 + x) = img.channels[c](y / scale, x / scale);
}

}  // namespace

Index text_width(const std::string& text, Index scale) {
  if (text.empty()) return 0;
  return (static_cast<Index>(text.size()) * kAdvance - 1) * scale;
}

void draw_text(RgbImage<float>& canvas, const std::string& text, Index x, Index y, Index scale, float value) {
  const auto& glyphs = font();
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto it = glyphs.find(static_cast<char>(std::toupper(static_cast<unsigned char>(text[i]))));
    if (it == glyphs.end()) continue;
    const Index gx = x + static_cast<Index>(i) * kAdvance * scale;
    for (Index r = 0; r < kGlyphH; ++r)
      for (Index col = 0; col < kGlyphW; ++col) {
        if (!((it->second[r] >> (kGlyphW - 1 - col)) & 1)) continue;
        for (Index dy = 0; dy < scale; ++dy)
          for (Index dx = 0; dx < scale; ++dx) {
            const Index py = y + r * scale + dy, px = gx + col * scale + dx;
            if (py < 0 || px < 0 || py >= canvas.height() || px >= canvas.width()) continue;
            for (auto& ch : canvas.channels) ch(py, px) = value;
          }
      }
  }
}

std::vector<std::string> grid_column_labels(const std::vector<std::string>& model_labels) {
  std::vector<std::string> labels{"grayscale"};
  labels.insert(labels.end(), model_labels.begin(), model_labels.end());
  labels.emplace_back("ground truth");
  return labels;
}

GridLayout grid_layout(Index rows, Index cols, Index image_side, const GridOptions& options) {
  GridLayout g;
  g.rows = rows;
  g.cols = cols;
  g.tile = image_side * options.scale;
  g.border = options.border;
  g.label_band = options.labels ? kGlyphH + 2 * options.border + 2 : 0;
  return g;
}

RgbImage<float> render_grid(const std::vector<GridRow>& rows, const std::vector<std::string>& model_labels,
                            const GridOptions& options) {
  if (rows.empty()) throw std::invalid_argument("render_grid: no images");
  if (options.scale < 1 || options.border < 0) throw std::invalid_argument("render_grid: bad scale or border");
  const Index side = rows.front().truth.height();
  const Index cols = static_cast<Index>(model_labels.size()) + 2;
  for (const auto& r : rows) {
    if (static_cast<Index>(r.outputs.size()) + 2 != cols)
      throw std::invalid_argument("render_grid: row has " + std::to_string(r.outputs.size()) +
                                  " model outputs, expected " + std::to_string(model_labels.size()));
    auto check = [&](const RgbImage<float>& img) {
      if (img.height() != side || img.width() != side)
        throw std::invalid_argument("render_grid: every tile must be " + std::to_string(side) + "x" +
                                    std::to_string(side));
    };
    check(r.grayscale);
    check(r.truth);
    for (const auto& o : r.outputs) check(o);
  }

  const GridLayout g = grid_layout(static_cast<Index>(rows.size()), cols, side, options);
  RgbImage<float> canvas(g.height(), g.width());
  for (auto& c : canvas.channels) c.setOnes();

  if (options.labels) {
    const auto labels = grid_column_labels(model_labels);
    for (Index c = 0; c < cols; ++c) {
      // Shrink-to-fit: fall back to truncation when a caption is wider than its tile.
      std::string text = labels[c];
      while (!text.empty() && text_width(text, 1) > g.tile) text.pop_back();
      const Index x = g.tile_x(c) + (g.tile - text_width(text, 1)) / 2;
      draw_text(canvas, text, x, options.border + 1, 1, 0.0f);
    }
  }
  for (Index r = 0; r < g.rows; ++r) {
    const auto& row = rows[r];
    blit(canvas, row.grayscale, g.tile_x(0), g.tile_y(r), options.scale);
    for (Index m = 0; m < static_cast<Index>(row.outputs.size()); ++m)
      blit(canvas, row.outputs[m], g.tile_x(m + 1), g.tile_y(r), options.scale);
    blit(canvas, row.truth, g.tile_x(cols - 1), g.tile_y(r), options.scale);
  }
  return canvas;
}

}  // namespace colorlab
