#include <gtest/gtest.h>

#include <random>
#include <set>

#include "test_support.hpp"

using namespace posediff;

namespace {

PoseFrame with_hand(PoseFrame f, HandSide side, double conf) {
  for (auto i : f.layout->group_indices(hand_group(side))) f.keypoints[i].conf = conf;
  return f;
}

// Union area of the reliable hand boxes, counted pixel by pixel.
long long union_area(const std::vector<PixelRect>& rects, int w, int h) {
  long long n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (const auto& r : rects) {
        if (r.contains(x, y)) {
          ++n;
          break;
        }
      }
    }
  return n;
}

}  // namespace

TEST(HandReliability, AllAboveThreshold) {
  EXPECT_TRUE(hand_reliability(posediff::testing::uniform_frame(0.9), HandSide::Left, 0.5));
  EXPECT_TRUE(hand_reliability(posediff::testing::uniform_frame(0.9), HandSide::Right, 0.5));
}

TEST(HandReliability, ThresholdIsStrict) {
  PoseFrame f = posediff::testing::uniform_frame(0.9);
  f.keypoints[100].conf = 0.5;  // one left-hand keypoint exactly at the threshold
  EXPECT_FALSE(hand_reliability(f, HandSide::Left, 0.5));
  EXPECT_TRUE(hand_reliability(f, HandSide::Right, 0.5));
}

TEST(HandReliability, ZeroConfidenceNeverReliable) {
  for (double tau : {0.0, 0.3, 1.0}) {
    EXPECT_FALSE(hand_reliability(posediff::testing::uniform_frame(0.0), HandSide::Left, tau));
  }
}

TEST(HandReliability, LayoutWithoutHands) {
  SkeletonLayout l;
  l.name = "no_hands";
  l.groups = {Group::Body};
  l.keypoint_colors = {{1, 1, 1}};
  const PoseFrame f({{0.5, 0.5, 1.0}}, register_layout(l));
  EXPECT_THROW(hand_reliability(f, HandSide::Left, 0.5), std::invalid_argument);
}

TEST(HandBbox, PaddedExtentMatchesHandArithmetic) {
  // Keypoints span x in [100, 150], y in [200, 260] on a 512x512 canvas (exact binary fractions).
  PoseFrame f = posediff::testing::uniform_frame(0.9);
  const auto idx = f.layout->group_indices(Group::LeftHand);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    f.keypoints[idx[j]].x = (100.0 + 50.0 * (j % 2)) / 512.0;
    f.keypoints[idx[j]].y = (200.0 + 60.0 * (j % 3 == 0)) / 512.0;
  }
  // pad = max(4, 0.25 * max(50, 60)) = 15
  EXPECT_EQ(hand_bbox(f, HandSide::Left, 0.25, 512, 512), (PixelRect{85, 185, 165, 275}));
  // Minimum padding wins for tight hands.
  EXPECT_EQ(hand_bbox(f, HandSide::Left, 0.01, 512, 512), (PixelRect{96, 196, 154, 264}));
}

TEST(HandBbox, DegenerateHandGetsEightPixelBox) {
  PoseFrame f = posediff::testing::uniform_frame(0.9, 100.0 / 512.0, 300.0 / 512.0);
  EXPECT_EQ(hand_bbox(f, HandSide::Right, 0.25, 512, 512), (PixelRect{96, 296, 104, 304}));
}

TEST(HandBbox, ClippedToCanvas) {
  PoseFrame f = posediff::testing::uniform_frame(0.9);
  for (auto i : f.layout->group_indices(Group::LeftHand)) {
    f.keypoints[i].x = (i % 2) ? 0.0 : 10.0 / 64.0;
    f.keypoints[i].y = (i % 2) ? 60.0 / 64.0 : 1.0;
  }
  const PixelRect r = hand_bbox(f, HandSide::Left, 0.25, 64, 64);
  EXPECT_EQ(r.x0, 0);
  EXPECT_EQ(r.y1, 64);
  EXPECT_LE(r.x1, 64);
}

TEST(BuildWeightMap, BothHandsReliableAtDefaultWeight) {
  std::mt19937_64 gen(4);
  const PoseFrame f = posediff::testing::frame_with_hands(gen, 0.8);
  const LossWeightMap m = build_weight_map(f, 0.6, 0.25, kHandLossWeight, 128, 96);
  std::set<double> values(m.data.begin(), m.data.end());
  EXPECT_EQ(values, (std::set<double>{1.0, 10.0}));
  const auto l = detect_hand(f, HandSide::Left, 0.6, 0.25, 128, 96);
  const auto r = detect_hand(f, HandSide::Right, 0.6, 0.25, 128, 96);
  ASSERT_TRUE(l.reliable && r.reliable);
  EXPECT_EQ(static_cast<long long>(m.weighted_pixel_count()), union_area({l.bbox, r.bbox}, 128, 96));
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 128; ++x) {
      EXPECT_EQ(m.at(x, y), (l.bbox.contains(x, y) || r.bbox.contains(x, y)) ? 10.0 : 1.0);
    }
}

TEST(BuildWeightMap, NoReliableHandsIsUniform) {
  const LossWeightMap m = build_weight_map(posediff::testing::uniform_frame(0.1), 0.6, 0.25, 10.0, 32, 32);
  for (double v : m.data) EXPECT_EQ(v, 1.0);
}

TEST(BuildWeightMap, UnitWeightIsConstantOne) {
  std::mt19937_64 gen(8);
  const LossWeightMap m = build_weight_map(posediff::testing::frame_with_hands(gen, 0.9), 0.6, 0.25, 1.0, 40, 40);
  for (double v : m.data) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(build_weight_map(posediff::testing::uniform_frame(1.0), 0.6, 0.25, 0.5, 40, 40),
               std::invalid_argument);
}

TEST(BuildWeightMap, OverlappingHandsDoNotStack) {
  const PoseFrame f = with_hand(posediff::testing::uniform_frame(0.9), HandSide::Left, 0.95);
  const LossWeightMap m = build_weight_map(f, 0.6, 0.25, 10.0, 64, 64);
  double mx = 0.0;
  for (double v : m.data) mx = std::max(mx, v);
  EXPECT_EQ(mx, 10.0);
}

// Property: raising tau_hand never grows the weighted set; value set stays within {1, w}.
TEST(BuildWeightMap, MonotoneShrinkageInThreshold) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const PoseFrame f = posediff::testing::frame_with_hands(gen, 0.4);
    double t1 = u(gen), t2 = u(gen);
    if (t1 > t2) std::swap(t1, t2);
    const auto lo = build_weight_map(f, t1, 0.25, 10.0, 64, 48);
    const auto hi = build_weight_map(f, t2, 0.25, 10.0, 64, 48);
    for (std::size_t i = 0; i < lo.data.size(); ++i) {
      ASSERT_TRUE(hi.data[i] == 1.0 || lo.data[i] == 10.0);
      ASSERT_TRUE(lo.data[i] == 1.0 || lo.data[i] == 10.0);
    }
  }
}

TEST(DownsampleMax, EightPixelBlocks) {
  LossWeightMap m(20, 16, 10.0);
  m.at(9, 3) = 10.0;
  const auto d = downsample_max(m);
  ASSERT_EQ(d.width, 3);
  ASSERT_EQ(d.height, 2);
  EXPECT_EQ(d.at(1, 0), 10.0);
  EXPECT_EQ(d.at(0, 0), 1.0);
  EXPECT_EQ(d.at(2, 1), 1.0);
}

TEST(EncodePgm, PreviewLevels) {
  LossWeightMap m(2, 1, 10.0);
  m.at(1, 0) = 10.0;
  const std::string pgm = encode_pgm(m);
  EXPECT_EQ(pgm, std::string("P5\n2 1\n255\n") + char(25) + char(static_cast<unsigned char>(255)));
}
