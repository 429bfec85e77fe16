#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pfpn/metrics.hpp"

namespace pfpn {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Simple RGB raster with line/text primitives (embedded 5x7 font).
class Canvas {
 public:
  Canvas(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  void set(int x, int y, Rgb c);
  Rgb get(int x, int y) const;
  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1);
  void fill_rect(int x0, int y0, int w, int h, Rgb c);
  /// Uppercases letters; unknown characters render as a box.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  void save_png(const std::filesystem::path& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> pixels_;
};

/// Color assigned to curve i in every plot.
Rgb curve_color(std::size_t i);

/// One labeled precision/recall curve per report, with axes, grid and
/// legend. Byte-deterministic for identical inputs.
void render_pr_plot(const std::vector<MetricsReport>& reports,
                    const std::vector<std::string>& labels,
                    const std::filesystem::path& out_png);

}  // namespace pfpn
