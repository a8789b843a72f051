#pragma once

// Pixel-art supervision: one RGBA cell per voxel column of a canonical view.
// Cells either come from a built-in block-average stand-in generator or from
// externally produced PNGs.

#include <filesystem>
#include <optional>

#include "geometry.hpp"
#include "palette.hpp"
#include "png_io.hpp"

namespace voxify {

struct PixelArtView {
  Image<Rgb> cells;
  Image<uint8_t> alpha;  // 1 = background, 0 = foreground
  int cell_size = 1;

  int cells_x() const { return cells.width; }
  int cells_y() const { return cells.height; }
  bool is_background(int cx, int cy) const { return alpha(cx, cy) != 0; }
};

inline void require_divisible(int width, int height, int cell_size) {
  if (cell_size < 1 || width % cell_size != 0 || height % cell_size != 0)
    throw Error(ErrorCode::kIndivisible,
                std::to_string(width) + "x" + std::to_string(height) + " by cell size " + std::to_string(cell_size));
}

/// Block-average stand-in for a learned pixelizer. A cell is background when
/// less than half of its pixels are covered. With a palette hint, foreground
/// cells get a half-strength per-channel min-max contrast stretch and are then
/// snapped to the nearest palette color.
inline PixelArtView generate_standin(const ViewRaster& raster, int cell_size,
                                     const std::optional<Palette>& palette_hint = std::nullopt) {
  require_divisible(raster.width(), raster.height(), cell_size);
  const int cw = raster.width() / cell_size, ch = raster.height() / cell_size;
  PixelArtView out{Image<Rgb>(cw, ch), Image<uint8_t>(cw, ch, 1), cell_size};
  const double cell_pixels = static_cast<double>(cell_size) * cell_size;
  for (int cy = 0; cy < ch; ++cy)
    for (int cx = 0; cx < cw; ++cx) {
      Rgb sum;
      int covered = 0;
      for (int y = cy * cell_size; y < (cy + 1) * cell_size; ++y)
        for (int x = cx * cell_size; x < (cx + 1) * cell_size; ++x)
          if (raster.coverage(x, y)) {
            sum += raster.color(x, y);
            ++covered;
          }
      if (covered / cell_pixels < 0.5) continue;
      out.alpha(cx, cy) = 0;
      out.cells(cx, cy) = sum / covered;
    }

  if (palette_hint) {
    Vec3 lo{1, 1, 1}, hi{0, 0, 0};
    for (size_t i = 0; i < out.cells.size(); ++i)
      if (!out.alpha.data[i]) {
        lo = cwise_min(lo, out.cells.data[i]);
        hi = cwise_max(hi, out.cells.data[i]);
      }
    for (size_t i = 0; i < out.cells.size(); ++i) {
      if (out.alpha.data[i]) continue;
      Rgb& c = out.cells.data[i];
      for (int k = 0; k < 3; ++k)
        if (hi[k] > lo[k]) c[k] = 0.5 * c[k] + 0.5 * (c[k] - lo[k]) / (hi[k] - lo[k]);
      c = palette_hint->colors[palette_hint->nearest(c)];
    }
  }
  return out;
}

/// Loads an RGBA PNG whose cells are cell_size×cell_size blocks; the top-left
/// texel of each block is used. Alpha below 128 marks background.
inline PixelArtView load_external(const std::filesystem::path& path, int cell_size) {
  const PngImage png = read_png(path);
  if (!png.has_alpha) throw Error(ErrorCode::kMissingAlpha, path.string());
  require_divisible(png.pixels.width, png.pixels.height, cell_size);
  const int cw = png.pixels.width / cell_size, ch = png.pixels.height / cell_size;
  PixelArtView out{Image<Rgb>(cw, ch), Image<uint8_t>(cw, ch, 1), cell_size};
  int non_uniform = 0;
  for (int cy = 0; cy < ch; ++cy)
    for (int cx = 0; cx < cw; ++cx) {
      const Rgba8 corner = png.pixels(cx * cell_size, cy * cell_size);
      bool uniform = true;
      for (int y = cy * cell_size; y < (cy + 1) * cell_size && uniform; ++y)
        for (int x = cx * cell_size; x < (cx + 1) * cell_size; ++x)
          if (!(png.pixels(x, y) == corner)) {
            uniform = false;
            break;
          }
      if (!uniform) ++non_uniform;
      out.alpha(cx, cy) = corner.a < 128 ? 1 : 0;
      out.cells(cx, cy) = to_rgb(corner);
    }
  if (non_uniform > 0)
    warn(path.string() + ": " + std::to_string(non_uniform) + " non-uniform cell(s); using corner texels");
  return out;
}

/// Writes the view at full pixel resolution (cells replicated), background transparent.
inline void save_pixel_art(const PixelArtView& view, const std::filesystem::path& path) {
  const int s = view.cell_size;
  Image<Rgba8> img(view.cells_x() * s, view.cells_y() * s);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int cx = x / s, cy = y / s;
      img(x, y) = view.is_background(cx, cy) ? Rgba8{0, 0, 0, 0} : to_rgba8(view.cells(cx, cy));
    }
  write_png(path, img);
}

/// Foreground cell colors of all views, pooled for palette extraction.
inline std::vector<Rgb> pool_foreground(std::span<const PixelArtView> views) {
  std::vector<Rgb> out;
  for (const PixelArtView& v : views)
    for (size_t i = 0; i < v.cells.size(); ++i)
      if (!v.alpha.data[i]) out.push_back(v.cells.data[i]);
  return out;
}

}  // namespace voxify
