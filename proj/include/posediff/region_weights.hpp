#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "posediff/pose.hpp"

namespace posediff {

enum class HandSide { Left, Right };

inline Group hand_group(HandSide side) { return side == HandSide::Left ? Group::LeftHand : Group::RightHand; }

/// Half-open integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
  long long area() const { return empty() ? 0 : static_cast<long long>(x1 - x0) * (y1 - y0); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

  friend constexpr bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct HandRegion {
  HandSide side = HandSide::Left;
  bool reliable = false;
  PixelRect bbox{};  // empty unless reliable
};

inline constexpr double kDefaultHandThreshold = 0.6;
inline constexpr double kDefaultHandPadFrac = 0.25;
inline constexpr double kHandLossWeight = 10.0;
inline constexpr double kMinHandPadPx = 4.0;

namespace detail {

inline std::vector<std::size_t> hand_indices(const PoseFrame& frame, HandSide side) {
  if (!frame.layout) throw std::invalid_argument("pose frame without layout");
  auto idx = frame.layout->group_indices(hand_group(side));
  if (idx.size() != 21) {
    throw std::invalid_argument("layout '" + frame.layout->name + "' lacks a 21-keypoint " +
                                to_string(hand_group(side)) + " group");
  }
  return idx;
}

}  // namespace detail

/// A hand is reliable only when every one of its keypoints is strictly above the threshold.
inline bool hand_reliability(const PoseFrame& frame, HandSide side, double tau_hand) {
  const auto idx = detail::hand_indices(frame, side);
  return std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return frame[i].conf > tau_hand; });
}

/// Padded pixel bounding box of a hand, clipped to the canvas. Does not check reliability.
inline PixelRect hand_bbox(const PoseFrame& frame, HandSide side, double pad_frac, int width, int height) {
  const auto idx = detail::hand_indices(frame, side);
  double min_x = INFINITY, min_y = INFINITY, max_x = -INFINITY, max_y = -INFINITY;
  for (auto i : idx) {
    const double px = frame[i].x * width;
    const double py = frame[i].y * height;
    min_x = std::min(min_x, px);
    max_x = std::max(max_x, px);
    min_y = std::min(min_y, py);
    max_y = std::max(max_y, py);
  }
  PixelRect r;
  if (min_x == max_x && min_y == max_y) {
    // Degenerate hand: fixed 8x8 box centered on the point.
    r.x0 = static_cast<int>(std::floor(min_x)) - 4;
    r.y0 = static_cast<int>(std::floor(min_y)) - 4;
    r.x1 = r.x0 + 8;
    r.y1 = r.y0 + 8;
  } else {
    const double pad = std::max(kMinHandPadPx, pad_frac * std::max(max_x - min_x, max_y - min_y));
    r.x0 = static_cast<int>(std::floor(min_x - pad));
    r.y0 = static_cast<int>(std::floor(min_y - pad));
    r.x1 = static_cast<int>(std::ceil(max_x + pad));
    r.y1 = static_cast<int>(std::ceil(max_y + pad));
  }
  r.x0 = std::clamp(r.x0, 0, width);
  r.x1 = std::clamp(r.x1, 0, width);
  r.y0 = std::clamp(r.y0, 0, height);
  r.y1 = std::clamp(r.y1, 0, height);
  return r;
}

inline HandRegion detect_hand(const PoseFrame& frame, HandSide side, double tau_hand, double pad_frac, int width,
                              int height) {
  HandRegion h;
  h.side = side;
  h.reliable = hand_reliability(frame, side, tau_hand);
  if (h.reliable) h.bbox = hand_bbox(frame, side, pad_frac, width, height);
  return h;
}

/// Per-pixel loss weights: w_hand inside reliable hand boxes, 1 elsewhere.
struct LossWeightMap {
  int width = 0;
  int height = 0;
  double hand_weight = 1.0;
  std::vector<double> data;

  LossWeightMap() = default;
  LossWeightMap(int w, int h, double hand_w = 1.0)
      : width(w), height(h), hand_weight(hand_w), data(static_cast<std::size_t>(w) * h, 1.0) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("weight map dimensions must be positive");
  }

  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  std::size_t weighted_pixel_count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](double v) { return v != 1.0; }));
  }

  friend bool operator==(const LossWeightMap&, const LossWeightMap&) = default;
};

inline LossWeightMap build_weight_map(const PoseFrame& frame, double tau_hand, double pad_frac, double w_hand,
                                      int width, int height) {
  if (!(w_hand >= 1.0)) throw std::invalid_argument("hand loss weight must be >= 1");
  LossWeightMap map(width, height, w_hand);
  for (HandSide side : {HandSide::Left, HandSide::Right}) {
    const HandRegion h = detect_hand(frame, side, tau_hand, pad_frac, width, height);
    if (!h.reliable) continue;
    for (int y = h.bbox.y0; y < h.bbox.y1; ++y) {
      for (int x = h.bbox.x0; x < h.bbox.x1; ++x) map.at(x, y) = w_hand;
    }
  }
  return map;
}

/// Max over each factor x factor block (ceil-divided), mapping pixel weights onto the latent grid.
inline LossWeightMap downsample_max(const LossWeightMap& map, int factor = 8) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  const int w = (map.width + factor - 1) / factor;
  const int h = (map.height + factor - 1) / factor;
  LossWeightMap out(w, h, map.hand_weight);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      double& dst = out.at(x / factor, y / factor);
      dst = std::max(dst, map.at(x, y));
    }
  }
  return out;
}

/// Binary PGM (P5) preview: 255 where the weight is amplified, 25 elsewhere.
inline std::string encode_pgm(const LossWeightMap& map) {
  std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  for (double v : map.data) out.push_back(static_cast<char>(static_cast<std::uint8_t>(v > 1.0 ? 255 : 25)));
  return out;
}

}  // namespace posediff
