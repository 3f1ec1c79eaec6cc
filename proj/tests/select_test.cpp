#include "dsol/select.hpp"

#include <gtest/gtest.h>

#include <set>

#include "dsol/error.hpp"
#include "testing.hpp"

namespace dsol {
namespace {

Image Checkerboard(int width, int height, int square, float lo = 50, float hi = 200) {
  Image img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) img(x, y) = ((x / square + y / square) % 2) ? hi : lo;
  }
  return img;
}

SelectorState DefaultState(int w, int h) {
  return SelectorState::FromConfig(SelectConfig{}, w, h);
}

TEST(SelectorState, Defaults) {
  const auto s = DefaultState(640, 480);
  EXPECT_EQ(s.cell_size, 16);
  EXPECT_EQ(s.max_points, 1200);
  EXPECT_EQ(s.min_points, 600);
  EXPECT_EQ(s.g_min, 64);
  SelectConfig bad;
  bad.cell_size = 3;
  EXPECT_THROW(SelectorState::FromConfig(bad, 640, 480), ConfigError);
}

TEST(OccupancyMask, Dilation) {
  OccupancyMask mask(200, 200);
  EXPECT_EQ(mask.CountMasked(), 0);
  mask.Mark({100, 100}, 2);
  EXPECT_EQ(mask.CountMasked(), 25);
  for (int y = 95; y <= 105; ++y) {
    for (int x = 95; x <= 105; ++x) {
      const bool inside = std::abs(x - 100) <= 2 && std::abs(y - 100) <= 2;
      EXPECT_EQ(mask.masked(x, y), inside) << x << "," << y;
    }
  }
  mask.Mark({0.2, 0.4}, 2);
  EXPECT_EQ(mask.CountMasked(), 25 + 9);
}

TEST(OccupancyMask, FromWindow) {
  const auto cam = testing::TestCamera();
  SlidingWindow window;
  EXPECT_EQ(make_occupancy_mask(window, Pose::Identity(), cam, 2).CountMasked(), 0);

  Keyframe kf;
  kf.id = 0;
  DepthPoint inside;
  inside.uv = {100, 100};
  inside.rho = 0.5;
  DepthPoint outside;
  outside.uv = {5, 5};
  outside.rho = 0.5;
  kf.points = {inside, outside};
  window.keyframes.push_back(kf);
  // Frame moved so that the (5, 5) point leaves the image.
  const Pose T_w_frame = Pose::Translation({0.1, 0, 0});
  const auto proj = ProjectMap(window, T_w_frame, cam);
  ASSERT_EQ(proj.size(), 1U);
  EXPECT_NEAR(proj[0].uv.x(), 100 - 400 * 0.1 * 0.5, 1e-9);
  const auto mask = make_occupancy_mask(window, T_w_frame, cam, 2);
  EXPECT_EQ(mask.CountMasked(), 25);
  EXPECT_TRUE(mask.masked(80, 100));
}

TEST(SelectPoints, ConstantImageSelectsNothing) {
  const auto pyr = build_pyramid(testing::ConstantImage(640, 480, 100), 5);
  const OccupancyMask mask(640, 480);
  const auto state = DefaultState(640, 480);
  const auto sel = select_points(pyr, mask, state);
  EXPECT_TRUE(sel.pixels.empty());
  EXPECT_EQ(sel.state.g_min, state.g_min - state.delta_g);
  EXPECT_TRUE(sel.second_round);
  auto zero = state;
  zero.g_min = 0;
  EXPECT_TRUE(select_points(pyr, mask, zero).pixels.empty());
  EXPECT_EQ(select_points(pyr, mask, zero).state.g_min, 0);
}

TEST(SelectPoints, GridBound) {
  const auto pyr = build_pyramid(testing::RandomTexture(640, 480, 11, 2), 5);
  const OccupancyMask mask(640, 480);
  auto state = DefaultState(640, 480);
  state.g_min = 0;
  const auto sel = select_points(pyr, mask, state);
  EXPECT_LE(sel.pixels.size(), 1200U);
  EXPECT_GT(sel.pixels.size(), 1000U);
}

// Scalar oracle: cells containing at least one pixel whose central difference is nonzero.
int CountEdgeCells(const Image& img, int cell) {
  int n = 0;
  for (int r = 0; r < img.height() / cell; ++r) {
    for (int c = 0; c < img.width() / cell; ++c) {
      bool edge = false;
      for (int y = std::max(1, r * cell); y < std::min((r + 1) * cell, img.height() - 1); ++y) {
        for (int x = std::max(1, c * cell); x < std::min((c + 1) * cell, img.width() - 1); ++x) {
          edge |= img(x + 1, y) != img(x - 1, y) || img(x, y + 1) != img(x, y - 1);
        }
      }
      n += edge;
    }
  }
  return n;
}

TEST(SelectPoints, CheckerboardMatchesScalarOracle) {
  const Image img = Checkerboard(320, 240, 24);
  const auto pyr = build_pyramid(img, 1);
  const OccupancyMask mask(320, 240);
  auto state = DefaultState(320, 240);
  const auto sel = select_points(pyr, mask, state);
  const int expected = CountEdgeCells(img, 16);
  EXPECT_EQ(static_cast<int>(sel.pixels.size()), expected);
  std::set<std::pair<int, int>> cells;
  for (const auto& p : sel.pixels) {
    EXPECT_TRUE(cells.insert({p.cell_row, p.cell_col}).second);
    EXPECT_EQ(p.cell_row, static_cast<int>(p.uv.y()) / 16);
    EXPECT_EQ(p.cell_col, static_cast<int>(p.uv.x()) / 16);
  }
  // 298 of 300 cells carry an edge: inside the target band, the threshold is kept.
  ASSERT_GE(expected, state.min_points);
  ASSERT_LE(expected, state.max_points);
  EXPECT_EQ(sel.state.g_min, state.g_min);

  const auto coarse = select_points(build_pyramid(Checkerboard(320, 240, 80), 1), mask, state);
  EXPECT_EQ(static_cast<int>(coarse.pixels.size()), CountEdgeCells(Checkerboard(320, 240, 80), 16));
  EXPECT_LT(coarse.pixels.size(), static_cast<size_t>(state.min_points));
  EXPECT_EQ(coarse.state.g_min, state.g_min - state.delta_g);
}

TEST(SelectPoints, SortedAndUnmasked) {
  const auto pyr = build_pyramid(testing::RandomTexture(320, 240, 12, 3), 3);
  OccupancyMask mask(320, 240);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 319), v(0, 239);
  for (int i = 0; i < 100; ++i) mask.Mark({u(rng), v(rng)}, 4);
  const auto sel = select_points(pyr, mask, DefaultState(320, 240));
  ASSERT_FALSE(sel.pixels.empty());
  for (size_t i = 0; i < sel.pixels.size(); ++i) {
    const auto& p = sel.pixels[i];
    EXPECT_FALSE(mask.masked(static_cast<int>(p.uv.x()), static_cast<int>(p.uv.y())));
    if (i > 0) {
      const auto& q = sel.pixels[i - 1];
      EXPECT_LT(std::make_pair(q.cell_row, q.cell_col), std::make_pair(p.cell_row, p.cell_col));
    }
  }
  const auto again = select_points(pyr, mask, DefaultState(320, 240));
  ASSERT_EQ(again.pixels.size(), sel.pixels.size());
  for (size_t i = 0; i < sel.pixels.size(); ++i) EXPECT_EQ(again.pixels[i].uv, sel.pixels[i].uv);
}

TEST(SelectPoints, FullyMaskedSelectsNothing) {
  const auto pyr = build_pyramid(testing::RandomTexture(160, 128, 13), 3);
  OccupancyMask mask(160, 128);
  for (int y = 0; y < 128; y += 4) {
    for (int x = 0; x < 160; x += 4) mask.Mark(Point2(x, y), 2);
  }
  EXPECT_TRUE(select_points(pyr, mask, DefaultState(160, 128)).pixels.empty());
}

TEST(SelectPoints, ThresholdTrajectoryReachesBand) {
  // A smooth image whose gradients are weak relative to the initial threshold.
  Image img(320, 240);
  for (int y = 0; y < 240; ++y) {
    for (int x = 0; x < 320; ++x) img(x, y) = static_cast<float>(0.5 * testing::SmoothPattern(x, y) * 0.1 + 100);
  }
  const auto pyr = build_pyramid(img, 3);
  const OccupancyMask mask(320, 240);
  auto state = DefaultState(320, 240);
  const int limit = static_cast<int>(std::ceil(state.g_min / state.delta_g));
  bool reached = false;
  for (int i = 0; i <= limit && !reached; ++i) {
    const auto sel = select_points(pyr, mask, state);
    const int n = static_cast<int>(sel.pixels.size());
    reached = (n >= state.min_points && n <= state.max_points) || state.g_min <= 0;
    state = sel.state;
  }
  EXPECT_TRUE(reached);
}

TEST(ExtractPatch, ConstantImage) {
  const auto pyr = build_pyramid(testing::ConstantImage(320, 240, 42), 5);
  const auto patch = extract_patch(pyr, {160, 120});
  ASSERT_TRUE(patch.has_value());
  ASSERT_EQ(patch->levels.size(), 5U);
  for (const auto& lvl : patch->levels) {
    for (int k = 0; k < kPatchSize; ++k) {
      EXPECT_EQ(lvl.intensity[k], 42);
      EXPECT_EQ(lvl.grad_x[k], 0);
      EXPECT_EQ(lvl.grad_y[k], 0);
    }
  }
}

TEST(ExtractPatch, BorderRejected) {
  const auto pyr = build_pyramid(testing::ConstantImage(320, 240, 42), 5);
  // Coarsest level is 20x15; (8, 100) maps to u = 0.5 there, within 1 px of the border.
  EXPECT_FALSE(extract_patch(pyr, {8, 100}).has_value());
  EXPECT_FALSE(extract_patch(pyr, {160, 236}).has_value());
  EXPECT_TRUE(extract_patch(pyr, {16, 100}).has_value());
}

TEST(ExtractPatch, RampOffsets) {
  Image ramp(128, 96);
  for (int y = 0; y < 96; ++y) {
    for (int x = 0; x < 128; ++x) ramp(x, y) = static_cast<float>(x);
  }
  const auto pyr = build_pyramid(ramp, 3);
  const auto patch = extract_patch(pyr, {60, 40});
  ASSERT_TRUE(patch.has_value());
  const auto& l0 = patch->levels[0];
  EXPECT_NEAR(l0.intensity[1] - l0.intensity[0], 1.0, 1e-6);
  EXPECT_NEAR(l0.intensity[2] - l0.intensity[0], -1.0, 1e-6);
  EXPECT_NEAR(l0.intensity[3] - l0.intensity[0], 0.0, 1e-6);
}

TEST(ExtractPatch, StoredValuesEqualInterpolation) {
  const auto pyr = build_pyramid(testing::RandomTexture(320, 240, 14, 3), 4);
  const Point2 uv(123.25, 77.5);
  const auto patch = extract_patch(pyr, uv);
  ASSERT_TRUE(patch.has_value());
  for (int l = 0; l < 4; ++l) {
    for (int k = 0; k < kPatchSize; ++k) {
      const Point2 px = Patch::PixelAt(uv, l, k);
      EXPECT_EQ(patch->levels[l].intensity[k], *interpolate(pyr.level(l).intensity, px));
      EXPECT_EQ(patch->levels[l].grad_x[k], gradient_at(pyr.level(l), px)->x());
    }
  }
}

TEST(ExtractPatch, SelectedPointsAreExtractable) {
  const auto pyr = build_pyramid(testing::RandomTexture(640, 480, 15, 2), 5);
  auto state = DefaultState(640, 480);
  state.g_min = 0;
  const auto sel = select_points(pyr, OccupancyMask(640, 480), state);
  for (const auto& p : sel.pixels) EXPECT_TRUE(extract_patch(pyr, p.uv).has_value());
}

}  // namespace
}  // namespace dsol
