#pragma once

// Figure emission without a plotting dependency: heatmaps and simple line
// charts rendered into binary PPM (P6) images. Rendering is a pure function
// of the numeric input, so the same data always yields identical bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "seqcsg/common.hpp"

namespace seqcsg {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

struct PpmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // rgb, row-major

  PpmImage(int w, int h, Rgb fill = {255, 255, 255})
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) set(x, y, fill);
  }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
  }

  void fill_rect(int x0, int y0, int w, int h, Rgb c) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) set(x, y, c);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P6\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
  }
};

// Dark-blue -> teal -> green -> yellow -> warm red gradient over [0,1].
inline Rgb colormap(double v) {
  v = std::clamp(v, 0.0, 1.0);
  static const std::array<std::array<double, 3>, 5> stops = {{
      {{13, 8, 135}},
      {{30, 120, 180}},
      {{40, 168, 131}},
      {{230, 201, 52}},
      {{220, 50, 32}},
  }};
  double scaled = v * (stops.size() - 1);
  std::size_t lo = std::min<std::size_t>(static_cast<std::size_t>(scaled),
                                         stops.size() - 2);
  double t = scaled - static_cast<double>(lo);
  auto mix = [&](int c) {
    return static_cast<std::uint8_t>(
        std::lround(stops[lo][c] * (1.0 - t) + stops[lo + 1][c] * t));
  };
  return {mix(0), mix(1), mix(2)};
}

// Cell grid heatmap; values are normalized by the grid maximum so small
// attention weights remain visible.
inline PpmImage render_heatmap(const std::vector<std::vector<double>>& rows,
                               int cell = 24, int gap = 2) {
  if (rows.empty() || rows.front().empty())
    throw ContractViolation("heatmap needs a non-empty grid");
  const int n_rows = static_cast<int>(rows.size());
  const int n_cols = static_cast<int>(rows.front().size());
  double max_v = 0.0;
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != n_cols)
      throw ContractViolation("heatmap rows must have equal length");
    for (double v : r) max_v = std::max(max_v, v);
  }
  const double scale = max_v > 0.0 ? 1.0 / max_v : 1.0;
  PpmImage img(n_cols * (cell + gap) + gap, n_rows * (cell + gap) + gap,
               {240, 240, 240});
  for (int i = 0; i < n_rows; ++i)
    for (int j = 0; j < n_cols; ++j)
      img.fill_rect(gap + j * (cell + gap), gap + i * (cell + gap), cell, cell,
                    colormap(rows[i][j] * scale));
  return img;
}

// Minimal multi-series line chart for sweep/ablation tables.
inline PpmImage render_line_chart(
    const std::vector<double>& xs,
    const std::vector<std::pair<std::string, std::vector<double>>>& series,
    int width = 640, int height = 400) {
  if (xs.size() < 2) throw ContractViolation("line chart needs >= 2 points");
  for (const auto& [name, ys] : series)
    if (ys.size() != xs.size())
      throw ContractViolation("series length mismatch for " + name);

  const int margin = 40;
  PpmImage img(width, height);
  const Rgb axis{60, 60, 60};
  for (int x = margin; x < width - margin / 2; ++x)
    img.set(x, height - margin, axis);
  for (int y = margin / 2; y <= height - margin; ++y) img.set(margin, y, axis);

  double x_min = xs.front(), x_max = xs.back();
  double y_min = 1e300, y_max = -1e300;
  for (const auto& [name, ys] : series)
    for (double v : ys) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  if (y_max == y_min) {
    y_max += 0.5;
    y_min -= 0.5;
  }
  auto px = [&](double x) {
    return margin + static_cast<int>(std::lround(
                        (x - x_min) / (x_max - x_min) *
                        (width - 1.5 * margin)));
  };
  auto py = [&](double y) {
    return height - margin -
           static_cast<int>(std::lround((y - y_min) / (y_max - y_min) *
                                        (height - 1.5 * margin)));
  };
  static const std::array<Rgb, 4> palette = {
      Rgb{31, 119, 180}, Rgb{255, 127, 14}, Rgb{44, 160, 44}, Rgb{214, 39, 40}};
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ys = series[s].second;
    Rgb c = palette[s % palette.size()];
    for (std::size_t i = 1; i < xs.size(); ++i) {
      // Bresenham-free: dense parametric segment, deterministic.
      int x0 = px(xs[i - 1]), y0 = py(ys[i - 1]);
      int x1 = px(xs[i]), y1 = py(ys[i]);
      int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
      for (int t = 0; t <= steps; ++t) {
        double u = static_cast<double>(t) / steps;
        int x = static_cast<int>(std::lround(x0 + u * (x1 - x0)));
        int y = static_cast<int>(std::lround(y0 + u * (y1 - y0)));
        img.set(x, y, c);
        img.set(x, y + 1, c);
      }
    }
    // Series marker in the top-right corner.
    img.fill_rect(width - margin / 2 - 12,
                  margin / 2 + static_cast<int>(s) * 14, 10, 10, c);
  }
  return img;
}

}  // namespace seqcsg
