#include "dsol/stereo.hpp"

#include <gtest/gtest.h>

#include <functional>

#include "testing.hpp"

namespace dsol {
namespace {

ZnccPatch RandomPatch(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0, 255);
  std::array<double, ZnccPatch::kSize> v{};
  for (auto& x : v) x = u(rng);
  return ZnccPatch::FromValues(v);
}

TEST(Zncc, Identities) {
  std::mt19937 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto a = RandomPatch(rng);
    const auto b = RandomPatch(rng);
    EXPECT_NEAR(zncc(a, a), 1.0, 1e-12);
    std::array<double, ZnccPatch::kSize> neg{};
    std::array<double, ZnccPatch::kSize> scaled{};
    for (int k = 0; k < ZnccPatch::kSize; ++k) {
      neg[k] = 300 - a.values[k];
      scaled[k] = 0.37 * a.values[k] + 12;
    }
    EXPECT_NEAR(zncc(a, ZnccPatch::FromValues(neg)), -1.0, 1e-12);
    EXPECT_NEAR(zncc(ZnccPatch::FromValues(scaled), b), zncc(a, b), 1e-12);
    EXPECT_DOUBLE_EQ(zncc(a, b), zncc(b, a));
    EXPECT_LE(std::abs(zncc(a, b)), 1.0);
  }
  std::array<double, ZnccPatch::kSize> flat{};
  flat.fill(80);
  EXPECT_EQ(zncc(ZnccPatch::FromValues(flat), RandomPatch(rng)), 0.0);
}

TEST(Zncc, ExtractShape) {
  Image img(20, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) img(x, y) = static_cast<float>(100 * y + x);
  }
  const auto p = ZnccPatch::Extract(img, {10, 10});
  EXPECT_EQ(p.values[0], 100 * 8 + 7);   // top-left: (-3, -2)
  EXPECT_EQ(p.values[34], 100 * 12 + 13);  // bottom-right: (+3, +2)
  EXPECT_EQ(p.values[17], 100 * 10 + 10);
}

// Right image sampled from a wider texture so that right(x, y) = left(x + d(y), y).
std::pair<Image, Image> ShiftedPair(int w, int h, const std::function<double(int)>& disparity,
                                    unsigned seed) {
  const testing::ValueNoise noise(seed, 6.0);
  Image left(w, h);
  Image right(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      left(x, y) = static_cast<float>(noise(x, y));
      right(x, y) = static_cast<float>(noise(x + disparity(y), y));
    }
  }
  return {left, right};
}

std::vector<Point2> InteriorPoints(int w, int h, int step, int margin) {
  std::vector<Point2> pts;
  for (int y = margin; y < h - margin; y += step) {
    for (int x = margin + 40; x < w - margin - 24; x += step) pts.emplace_back(x, y);
  }
  return pts;
}

TEST(MatchStereo, KnownShift) {
  const auto [l, r] = ShiftedPair(320, 240, [](int) { return 8.0; }, 3);
  const auto pl = build_pyramid(l, 4);
  const auto pr = build_pyramid(r, 4);
  const auto pts = InteriorPoints(320, 240, 17, 12);
  const auto res = match_stereo(pl, pr, pts, StereoConfig{});
  int matched = 0;
  for (const auto& m : res) {
    if (!m.matched) continue;
    ++matched;
    EXPECT_NEAR(m.disparity, 8.0, 0.25);
    EXPECT_GE(m.score, 0.5);
  }
  EXPECT_GT(matched, static_cast<int>(0.9 * pts.size()));
}

TEST(MatchStereo, ZeroDisparity) {
  const auto [l, r] = ShiftedPair(320, 240, [](int) { return 0.0; }, 4);
  const auto pl = build_pyramid(l, 4);
  const auto pr = build_pyramid(r, 4);
  const auto pts = InteriorPoints(320, 240, 23, 12);
  for (const auto& m : match_stereo(pl, pr, pts, StereoConfig{})) {
    ASSERT_TRUE(m.matched);
    EXPECT_NEAR(m.disparity, 0.0, 0.25);
  }
}

TEST(MatchStereo, ConstantRegionNoMatch) {
  const auto pl = build_pyramid(testing::ConstantImage(160, 120, 90), 3);
  const auto pr = build_pyramid(testing::RandomTexture(160, 120, 5), 3);
  const std::vector<Point2> pts{{80, 60}, {100, 30}};
  for (const auto& m : match_stereo(pl, pr, pts, StereoConfig{})) EXPECT_FALSE(m.matched);
}

// Exhaustive integer search over the full range at level 0, parabola refined.
double BruteForce(const Image& l, const Image& r, const Point2& uv, int max_d) {
  const auto ref = ZnccPatch::Extract(l, uv);
  std::vector<double> s(static_cast<size_t>(max_d) + 2, -2);
  int best = 0;
  for (int d = 0; d <= max_d && uv.x() - d >= 0; ++d) {
    s[d] = zncc(ref, ZnccPatch::Extract(r, {uv.x() - d, uv.y()}));
    if (s[d] > s[best]) best = d;
  }
  if (best == 0 || best == max_d) return best;
  const double den = s[best - 1] - 2 * s[best] + s[best + 1];
  return den < 0 ? best + 0.5 * (s[best - 1] - s[best + 1]) / den : best;
}

TEST(MatchStereo, CoarseToFineAgreesWithExhaustiveSearch) {
  const int w = 320;
  const int h = 240;
  const auto [l, r] = ShiftedPair(w, h, [](int y) { return 6.0 + 10.0 * y / 240; }, 6);
  const auto pl = build_pyramid(l, 4);
  const auto pr = build_pyramid(r, 4);
  const auto pts = InteriorPoints(w, h, 13, 12);
  const auto res = match_stereo(pl, pr, pts, StereoConfig{});
  int matched = 0;
  int agree = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!res[i].matched) continue;
    ++matched;
    agree += std::abs(res[i].disparity - BruteForce(l, r, pts[i], w / 4)) < 0.5;
  }
  ASSERT_GT(matched, 100);
  EXPECT_GE(agree, 0.95 * matched);
}

TEST(DisparityToInvDepth, Examples) {
  StereoRig rig;
  rig.cam = testing::TestCamera();
  rig.cam.fx = 100;
  rig.baseline = 0.5;
  EXPECT_DOUBLE_EQ(disparity_to_inv_depth(10, rig), 0.2);
  EXPECT_EQ(disparity_to_inv_depth(0, rig), 0.0);
  const auto w = warp({300, 200}, disparity_to_inv_depth(10, rig), rig.RightFromLeft(), rig.cam);
  EXPECT_NEAR(300 - w->uv.x(), 10, 1e-9);
}

DepthPoint PointAt(double u, double v, int row, int col) {
  DepthPoint p;
  p.uv = {u, v};
  p.cell_row = row;
  p.cell_col = col;
  return p;
}

TEST(InitDepths, PriorityOrder) {
  StereoRig rig;
  rig.cam = testing::TestCamera(320, 240);
  rig.cam.fx = 100;
  rig.baseline = 0.5;
  const auto [l, r] = ShiftedPair(320, 240, [](int) { return 10.0; }, 7);
  const auto pl = build_pyramid(l, 4);
  const auto pr = build_pyramid(r, 4);
  Image depth(320, 240, 0.0F);
  depth(100, 100) = 2.0F;
  depth(200, 100) = 150.0F;  // beyond the valid range

  const CellGrid grid(320, 240, 16);
  MapHits hits(grid);
  hits.Add({40, 200}, 0.2);
  hits.Add({45, 205}, 0.4);

  std::vector<DepthPoint> pts{PointAt(100, 100, 6, 6), PointAt(200, 100, 6, 12),
                              PointAt(44, 204, 12, 2), PointAt(300, 20, 1, 18)};
  DepthSources src;
  src.depth = &depth;
  src.left = &pl;
  src.right = &pr;
  src.map = &hits;
  init_depths(pts, src, rig, StereoConfig{});
  EXPECT_EQ(pts[0].source, InitSource::kDepthImage);
  EXPECT_DOUBLE_EQ(pts[0].rho, 0.5);
  EXPECT_EQ(pts[1].source, InitSource::kStereo);
  EXPECT_NEAR(pts[1].rho, 0.2, 0.005);

  // Without depth and stereo the map average is used; a point without any source stays empty.
  DepthSources map_only;
  map_only.map = &hits;
  init_depths(pts, map_only, rig, StereoConfig{});
  EXPECT_EQ(pts[2].source, InitSource::kMap);
  EXPECT_DOUBLE_EQ(pts[2].rho, 0.3);
  EXPECT_EQ(pts[3].source, InitSource::kNone);
  EXPECT_EQ(pts[3].rho, 0.0);
  EXPECT_EQ(pts[0].source, InitSource::kNone);
}

TEST(InitDepths, EverySourceIsExclusive) {
  StereoRig rig{testing::TestCamera(320, 240), 0.1};
  const auto [l, r] = ShiftedPair(320, 240, [](int) { return 5.0; }, 8);
  const auto pl = build_pyramid(l, 4);
  const auto pr = build_pyramid(r, 4);
  std::vector<DepthPoint> pts;
  for (const auto& uv : InteriorPoints(320, 240, 31, 12)) pts.push_back(PointAt(uv.x(), uv.y(), 0, 0));
  DepthSources src;
  src.left = &pl;
  src.right = &pr;
  init_depths(pts, src, rig, StereoConfig{});
  for (const auto& p : pts) {
    EXPECT_EQ(p.rho > 0, p.source != InitSource::kNone);
    if (p.source == InitSource::kStereo) EXPECT_NEAR(p.rho, 5.0 / (400 * 0.1), 0.01);
  }
}

}  // namespace
}  // namespace dsol
