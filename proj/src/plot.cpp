#include "mmcast/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace mmcast {

namespace {

using Rgb = std::array<unsigned char, 3>;

// 3x5 glyphs, one row per entry, bit 2 is the left column.
struct Glyph {
  char c;
  unsigned char rows[5];
};

constexpr Glyph kGlyphs[] = {
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}},
    {'3', {7, 1, 7, 1, 7}}, {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}},
    {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}}, {'8', {7, 5, 7, 5, 7}},
    {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}},
    {'e', {0, 7, 7, 4, 7}}, {'+', {0, 2, 7, 2, 0}},
};

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = &px_[(static_cast<std::size_t>(y) * w_ + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void line(double x0, double y0, double x1, double y1, Rgb c) {
    const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      set(x, y, c);
      set(x, y + 1, c);
    }
  }

  void rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, c);
  }

  void text(int x, int y, const std::string& s, Rgb c, int scale = 2) {
    for (char ch : s) {
      for (const auto& g : kGlyphs) {
        if (g.c != ch) continue;
        for (int r = 0; r < 5; ++r)
          for (int col = 0; col < 3; ++col)
            if (g.rows[r] & (4 >> col)) rect(x + col * scale, y + r * scale, x + col * scale + scale - 1,
                                             y + r * scale + scale - 1, c);
      }
      x += 4 * scale;
    }
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P6\n" << w_ << " " << h_ << "\n255\n";
    out.write(reinterpret_cast<const char*>(px_.data()), static_cast<std::streamsize>(px_.size()));
  }

 private:
  int w_, h_;
  std::vector<unsigned char> px_;
};

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

std::array<unsigned char, 3> palette_color(std::size_t index) {
  static constexpr Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40},  {44, 160, 44},
                                     {255, 127, 14}, {148, 103, 189}, {140, 86, 75}};
  return kPalette[index % std::size(kPalette)];
}

void write_line_plot_ppm(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                         int width, int height) {
  Canvas canvas(width, height);
  const int left = 70, right = width - 20, top = 20, bottom = height - 40;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) hi = lo + 1.0;

  const Rgb black{0, 0, 0}, grid{225, 225, 225};
  for (int i = 0; i <= 4; ++i) {
    const int y = bottom - (bottom - top) * i / 4;
    canvas.line(left, y, right, y, grid);
  }
  canvas.line(left, top, left, bottom, black);
  canvas.line(left, bottom, right, bottom, black);
  canvas.text(4, top, short_number(hi), black);
  canvas.text(4, bottom - 10, short_number(lo), black);
  canvas.text(left, bottom + 10, "1", black);
  canvas.text(right - 30, bottom + 10, std::to_string(n), black);

  const auto px = [&](std::size_t i) {
    return n <= 1 ? left : left + (right - left) * static_cast<double>(i) / (n - 1);
  };
  const auto py = [&](double v) { return bottom - (bottom - top) * (v - lo) / (hi - lo); };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto color = palette_color(k);
    const auto& v = series[k].values;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      if (std::isfinite(v[i]) && std::isfinite(v[i + 1])) {
        canvas.line(px(i), py(v[i]), px(i + 1), py(v[i + 1]), color);
      }
    }
    if (v.size() == 1 && std::isfinite(v[0])) canvas.rect(left - 2, py(v[0]) - 2, left + 2, py(v[0]) + 2, color);
    const int sx = right - 20 - 16 * static_cast<int>(series.size() - 1 - k);
    canvas.rect(sx, top + 4, sx + 10, top + 14, color);
  }
  canvas.write(path);
}

}  // namespace mmcast
