#include "pfpn/plot.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "pfpn/image_io.hpp"

namespace pfpn {

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used (MSB of the 5 = left column).
const std::map<char, std::array<std::uint8_t, 7>>& font() {
  static const std::map<char, std::array<std::uint8_t, 7>> f = {
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
      {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
      {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
      {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
      {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
      {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
      {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
      {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
      {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
      {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
      {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
      {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
      {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
      {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
      {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
      {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
      {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
      {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
      {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
      {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
      {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
      {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
      {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a}},
      {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08}},
      {'-', {0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1f}},
      {':', {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00}},
      {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'%', {0x19, 0x1a, 0x02, 0x04, 0x08, 0x0b, 0x13}},
      {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
      {'=', {0x00, 0x00, 0x1f, 0x00, 0x1f, 0x00, 0x00}},
  };
  return f;
}

const std::array<std::uint8_t, 7> kUnknownGlyph = {0x1f, 0x11, 0x11, 0x11,
                                                   0x11, 0x11, 0x1f};

}  // namespace

Canvas::Canvas(int width, int height, Rgb fill)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(width) * height * 3) {
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  std::uint8_t* p = &pixels_[(std::size_t(y) * width_ + x) * 3];
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

Rgb Canvas::get(int x, int y) const {
  const std::uint8_t* p = &pixels_[(std::size_t(y) * width_ + x) * 3];
  return {p[0], p[1], p[2]};
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c, int thickness) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    for (int oy = 0; oy < thickness; ++oy) {
      for (int ox = 0; ox < thickness; ++ox) {
        set(x0 + ox, y0 + oy, c);
      }
    }
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::fill_rect(int x0, int y0, int w, int h, Rgb c) {
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      set(x, y, c);
    }
  }
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  int cx = x;
  const auto& f = font();
  for (char raw : s) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    auto it = f.find(ch);
    const auto& glyph = it != f.end() ? it->second : kUnknownGlyph;
    for (int row = 0; row < 7; ++row) {
      for (int col = 0; col < 5; ++col) {
        if (glyph[row] & (1 << (4 - col))) {
          for (int oy = 0; oy < scale; ++oy) {
            for (int ox = 0; ox < scale; ++ox) {
              set(cx + col * scale + ox, y + row * scale + oy, c);
            }
          }
        }
      }
    }
    cx += 6 * scale;
  }
}

void Canvas::save_png(const std::filesystem::path& path) const {
  write_png_rgb(path, pixels_.data(), width_, height_);
}

Rgb curve_color(std::size_t i) {
  static const Rgb palette[] = {
      {214, 39, 40},  {31, 119, 180}, {44, 160, 44},  {255, 127, 14},
      {148, 103, 189}, {140, 86, 75},  {23, 190, 207}, {227, 119, 194},
  };
  return palette[i % 8];
}

void render_pr_plot(const std::vector<MetricsReport>& reports,
                    const std::vector<std::string>& labels,
                    const std::filesystem::path& out_png) {
  if (reports.empty()) {
    throw std::invalid_argument("plot: need at least one report");
  }
  if (reports.size() != labels.size()) {
    throw std::invalid_argument("plot: one label per report required");
  }
  const int W = 760, H = 560;
  const int x0 = 80, y0 = 50, x1 = 540, y1 = 510;  // plot box
  Canvas cv(W, H);
  const Rgb black{20, 20, 20}, gray{210, 210, 210};

  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    const int px = x0 + static_cast<int>(std::lround(v * (x1 - x0)));
    const int py = y1 - static_cast<int>(std::lround(v * (y1 - y0)));
    if (i > 0 && i < 5) {
      cv.line(px, y0, px, y1, gray);
      cv.line(x0, py, x1, py, gray);
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    cv.text(px - 8, y1 + 8, buf, black);
    cv.text(x0 - 28, py - 3, buf, black);
  }
  cv.line(x0, y0, x1, y0, black);
  cv.line(x0, y1, x1, y1, black);
  cv.line(x0, y0, x0, y1, black);
  cv.line(x1, y0, x1, y1, black);
  cv.text((x0 + x1) / 2 - 50, H - 20, "RECALL", black, 2);
  for (std::size_t i = 0; i < 9; ++i) {
    cv.text(14, y0 + 120 + static_cast<int>(i) * 16,
            std::string(1, "PRECISION"[i]), black, 2);
  }
  cv.text((x0 + x1) / 2 - 60, 18, "PR CURVES", black, 2);

  auto to_px = [&](double recall, double precision) {
    const int px = x0 + static_cast<int>(std::lround(recall * (x1 - x0)));
    const int py = y1 - static_cast<int>(std::lround(precision * (y1 - y0)));
    return std::pair<int, int>(px, py);
  };
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const Rgb c = curve_color(i);
    const PRCurve& pr = reports[i].pr;
    for (int t = 0; t + 1 < 256; ++t) {
      auto [ax, ay] = to_px(pr.recall[t], pr.precision[t]);
      auto [bx, by] = to_px(pr.recall[t + 1], pr.precision[t + 1]);
      cv.line(ax, ay, bx, by, c, 2);
    }
  }

  const int lx = x1 + 20;
  int ly = y0 + 10;
  cv.text(lx, ly - 4, "LEGEND", black);
  ly += 14;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    cv.fill_rect(lx, ly, 18, 8, curve_color(i));
    std::string label = labels[i];
    if (label.size() > 24) label = label.substr(0, 24);
    cv.text(lx + 24, ly, label, black);
    ly += 14;
  }
  cv.save_png(out_png);
}

}  // namespace pfpn
