// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#include "mixdet/plot.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixdet {
namespace {

TEST(NiceTicks, Uses125StepsAndCoversTheRange) {
  const std::vector<double> t10 = detail::nice_ticks(0.0, 10.0);
  ASSERT_EQ(t10.size(), 6u);
  for (std::size_t i = 0; i < t10.size(); ++i) EXPECT_DOUBLE_EQ(t10[i], 2.0 * i);

  const std::vector<double> t1 = detail::nice_ticks(0.0, 1.0);
  ASSERT_EQ(t1.size(), 6u);
  for (std::size_t i = 0; i < t1.size(); ++i) EXPECT_NEAR(t1[i], 0.2 * i, 1e-12);

  // Ticks stay inside the range and ascend, whatever the span.
  for (auto [lo, hi] : {std::pair{-3.7, 12.9}, {0.001, 0.0017}, {-1e6, 1e6}}) {
    const std::vector<double> ticks = detail::nice_ticks(lo, hi);
    ASSERT_GE(ticks.size(), 2u);
    EXPECT_GE(ticks.front(), lo - 1e-9 * (hi - lo));
    EXPECT_LE(ticks.back(), hi + 1e-9 * (hi - lo));
    for (std::size_t i = 1; i < ticks.size(); ++i) EXPECT_LT(ticks[i - 1], ticks[i]);
  }

  EXPECT_EQ(detail::nice_ticks(3.0, 3.0), std::vector<double>{3.0});
}

TEST(Font, CoversTheCharactersReportsEmit) {
  const std::string chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 +-.,:/()=%_";
  for (char c : chars) EXPECT_NE(detail::find_glyph(c), nullptr) << "missing glyph: " << c;
  EXPECT_EQ(detail::text_width("AB"), 11);
  EXPECT_EQ(detail::text_width(""), 0);
  EXPECT_EQ(detail::text_width("A", 2), 10);
}

TEST(Font, DrawTextMarksPixelsIncludingUnknownGlyphBox) {
  ImageU8 img(64, 16);
  std::fill(img.rgb.begin(), img.rgb.end(), std::uint8_t{255});
  detail::draw_text(img, 2, 2, "a#", Rgb{0, 0, 0});  // lower-case upcased, '#' boxed
  int dark = 0;
  for (std::uint8_t v : img.rgb) dark += v != 255;
  EXPECT_GT(dark, 30);  // both cells drew something
}

TEST(Plot, RenderIsDeterministicAndDimensionedAsAsked) {
  PlotSpec spec;
  spec.title = "demo";
  spec.x_label = "x";
  spec.y_label = "y";
  spec.width = 320;
  spec.height = 200;
  spec.series.push_back({"rise", {0, 1, 2, 3}, {0.0, 0.5, 0.25, 1.0}});
  spec.series.push_back({"dot", {1.5}, {0.75}});
  const ImageU8 a = render_line_plot(spec);
  const ImageU8 b = render_line_plot(spec);
  EXPECT_EQ(a.width, 320);
  EXPECT_EQ(a.height, 200);
  EXPECT_TRUE(a == b);
  int colored = 0;
  for (std::size_t i = 0; i < a.rgb.size(); i += 3)
    colored += !(a.rgb[i] == a.rgb[i + 1] && a.rgb[i + 1] == a.rgb[i + 2]);
  EXPECT_GT(colored, 20) << "series polylines should add non-grey pixels";
}

TEST(Plot, RejectsDegenerateInput) {
  PlotSpec spec;
  EXPECT_THROW(render_line_plot(spec), std::invalid_argument);
  spec.series.push_back({"bad", {0, 1}, {0}});
  EXPECT_THROW(render_line_plot(spec), std::invalid_argument);
  spec.series[0] = {"empty", {}, {}};
  EXPECT_THROW(render_line_plot(spec), std::invalid_argument);
  spec.series[0] = {"ok", {0, 1}, {0, 1}};
  spec.width = 10;
  EXPECT_THROW(render_line_plot(spec), std::invalid_argument);
}

TEST(Plot, WritePlotRoundTripsThroughPng) {
  PlotSpec spec;
  spec.title = "io";
  spec.series.push_back({"s", {0, 1, 2}, {1, 0, 1}});
  const std::string path =
      (std::filesystem::temp_directory_path() / "mixdet_plot_test.png").string();
  write_line_plot(path, spec);
  const ImageU8 back = read_png(path);
  EXPECT_TRUE(back == render_line_plot(spec));
  std::remove(path.c_str());
}

}  // namespace
}  // namespace mixdet
