// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixdet/pngio.hpp"

namespace mixdet {

// ---------------------------------------------------------------------------
// Minimal raster line plots so runs can be compared without leaving the lab:
// white canvas, axes with 1-2-5 ticks, one polyline per series, legend. Text
// comes from an embedded 5x7 pixel font (digits, upper-case letters, a few
// symbols; lower-case input is upcased).
// ---------------------------------------------------------------------------

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 440;
  std::vector<PlotSeries> series;
};

namespace detail {

// Row-major 5x7 glyphs, one byte per row, low 5 bits used (bit 4 = left).
struct Glyph {
  char ch;
  std::array<std::uint8_t, 7> rows;
};

inline const Glyph* find_glyph(char c) {
  static const Glyph kGlyphs[] = {
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
  };
  for (const Glyph& g : kGlyphs)
    if (g.ch == c) return &g;
  return nullptr;
}

inline void put_pixel(ImageU8& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.at(y, x, 0) = c.r;
  img.at(y, x, 1) = c.g;
  img.at(y, x, 2) = c.b;
}

inline void fill_rect(ImageU8& img, int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = std::max(0, y0); y <= std::min(img.height - 1, y1); ++y)
    for (int x = std::max(0, x0); x <= std::min(img.width - 1, x1); ++x)
      put_pixel(img, x, y, c);
}

inline void draw_hline(ImageU8& img, int x0, int x1, int y, Rgb c) {
  for (int x = x0; x <= x1; ++x) put_pixel(img, x, y, c);
}

inline void draw_vline(ImageU8& img, int x, int y0, int y1, Rgb c) {
  for (int y = y0; y <= y1; ++y) put_pixel(img, x, y, c);
}

/// Bresenham segment.
inline void draw_line(ImageU8& img, int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put_pixel(img, x0, y0, c);
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

inline int text_width(const std::string& text, int scale = 1) {
  return text.empty() ? 0 : static_cast<int>(text.size()) * 6 * scale - scale;
}

/// Draw `text` with its top-left corner at (x, y). Unknown characters render
/// as a hollow box so missing glyphs are visible rather than silent.
inline void draw_text(ImageU8& img, int x, int y, const std::string& text, Rgb c,
                      int scale = 1) {
  int cx = x;
  for (char raw : text) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    const Glyph* g = find_glyph(ch);
    const std::array<std::uint8_t, 7> box = {0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F};
    const std::array<std::uint8_t, 7>& rows = g ? g->rows : box;
    for (int ry = 0; ry < 7; ++ry)
      for (int rx = 0; rx < 5; ++rx)
        if (rows[static_cast<std::size_t>(ry)] & (1u << (4 - rx)))
          fill_rect(img, cx + rx * scale, y + ry * scale, cx + rx * scale + scale - 1,
                    y + ry * scale + scale - 1, c);
    cx += 6 * scale;
  }
}

/// Evenly spaced ticks at multiples of a 1/2/5 * 10^k step covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double span = hi - lo;
  double step = std::pow(10.0, std::floor(std::log10(span / target)));
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (span / (step * mult) <= target) {
      step *= mult;
      break;
    }
  }
  std::vector<double> ticks;
  const double first = std::ceil(lo / step) * step;
  for (double v = first; v <= hi + step * 1e-9; v += step)
    ticks.push_back(std::abs(v) < step * 1e-9 ? 0.0 : v);
  return ticks;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline constexpr Rgb kPalette[] = {
    {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
    {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
};

}  // namespace detail

/// @brief Render the plot to an image. Series are clipped to the data range;
/// a single-point series renders as a small marker.
inline ImageU8 render_line_plot(const PlotSpec& spec) {
  if (spec.series.empty()) throw std::invalid_argument("plot: no series");
  for (const PlotSeries& s : spec.series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("plot: series \"" + s.label + "\" x/y size mismatch");
    if (s.x.empty()) throw std::invalid_argument("plot: series \"" + s.label + "\" is empty");
  }
  if (spec.width < 160 || spec.height < 120)
    throw std::invalid_argument("plot: canvas too small");

  using namespace detail;
  const Rgb white{255, 255, 255}, black{20, 20, 20}, grey{225, 225, 225},
      axis{90, 90, 90};
  ImageU8 img(spec.width, spec.height);
  std::fill(img.rgb.begin(), img.rgb.end(), std::uint8_t{255});

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const PlotSeries& s : spec.series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!(xmax > xmin)) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (!(ymax > ymin)) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  // Headroom so lines don't sit on the frame.
  const double ypad = (ymax - ymin) * 0.05;
  ymin -= ypad;
  ymax += ypad;

  const int left = 64, right = spec.width - 18, top = 30, bottom = spec.height - 40;
  auto px = [&](double v) {
    return left + static_cast<int>(std::lround((v - xmin) / (xmax - xmin) * (right - left)));
  };
  auto py = [&](double v) {
    return bottom - static_cast<int>(std::lround((v - ymin) / (ymax - ymin) * (bottom - top)));
  };

  // Grid + ticks.
  for (double t : nice_ticks(xmin, xmax)) {
    const int x = px(t);
    draw_vline(img, x, top, bottom, grey);
    const std::string label = tick_label(t);
    draw_text(img, x - text_width(label) / 2, bottom + 6, label, black);
  }
  for (double t : nice_ticks(ymin, ymax)) {
    const int y = py(t);
    draw_hline(img, left, right, y, grey);
    const std::string label = tick_label(t);
    draw_text(img, left - 6 - text_width(label), y - 3, label, black);
  }

  // Frame.
  draw_hline(img, left, right, bottom, axis);
  draw_vline(img, left, top, bottom, axis);
  draw_hline(img, left, right, top, axis);
  draw_vline(img, right, top, bottom, axis);

  // Series.
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const PlotSeries& s = spec.series[si];
    const Rgb c = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (s.x.size() == 1) {
      fill_rect(img, px(s.x[0]) - 2, py(s.y[0]) - 2, px(s.x[0]) + 2, py(s.y[0]) + 2, c);
      continue;
    }
    for (std::size_t i = 1; i < s.x.size(); ++i)
      draw_line(img, px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), c);
  }

  // Title and axis labels.
  draw_text(img, (spec.width - text_width(spec.title)) / 2, 10, spec.title, black);
  draw_text(img, (left + right - text_width(spec.x_label)) / 2, spec.height - 14,
            spec.x_label, black);
  draw_text(img, 6, 10, spec.y_label, black);

  // Legend, top-right inside the frame.
  int legend_w = 0;
  for (const PlotSeries& s : spec.series)
    legend_w = std::max(legend_w, text_width(s.label));
  const int lx = right - legend_w - 26, ly = top + 6;
  const int lh = static_cast<int>(spec.series.size()) * 11 + 4;
  fill_rect(img, lx - 4, ly - 3, right - 4, ly + lh - 3, white);
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const Rgb c = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const int y = ly + static_cast<int>(si) * 11;
    fill_rect(img, lx, y + 1, lx + 12, y + 5, c);
    draw_text(img, lx + 18, y, spec.series[si].label, black);
  }
  return img;
}

inline void write_line_plot(const std::string& path, const PlotSpec& spec) {
  write_png(path, render_line_plot(spec));
}

}  // namespace mixdet
