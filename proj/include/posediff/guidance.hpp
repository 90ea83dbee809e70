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

/// H x W x 3 raster, row-major, channel-interleaved, values in [0, 1].
struct GuidanceMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GuidanceMap() = default;
  GuidanceMap(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  double& at(int x, int y, int ch) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
  double at(int x, int y, int ch) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }

  friend bool operator==(const GuidanceMap&, const GuidanceMap&) = default;
};

enum class ConfidenceMode { Scaled, Threshold };

struct RenderStyle {
  double keypoint_radius = 4.0;
  double limb_thickness = 4.0;
  ConfidenceMode mode = ConfidenceMode::Scaled;
  double threshold = 0.3;  // only read in Threshold mode

  /// 4 px strokes at a 768 px tall canvas, scaled with canvas height.
  static RenderStyle for_canvas(int height, ConfidenceMode mode = ConfidenceMode::Scaled, double tau = 0.3) {
    RenderStyle s;
    const double size = std::max(1.0, std::round(4.0 * height / 768.0));
    s.keypoint_radius = size;
    s.limb_thickness = size;
    s.mode = mode;
    s.threshold = tau;
    return s;
  }

  void validate() const {
    if (!(keypoint_radius >= 1.0) || !(limb_thickness >= 1.0)) {
      throw std::invalid_argument("keypoint radius and limb thickness must be >= 1 px");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in [0,1]");
  }
};

namespace detail {

inline void composite_max(GuidanceMap& map, int x, int y, const Rgb& c) {
  double* px = &map.data[(static_cast<std::size_t>(y) * map.width + x) * 3];
  px[0] = std::max(px[0], c.r);
  px[1] = std::max(px[1], c.g);
  px[2] = std::max(px[2], c.b);
}

inline Rgb scale(const Rgb& c, double s) { return {c.r * s, c.g * s, c.b * s}; }

// Pixel (i, j) is sampled at its center (i + 0.5, j + 0.5).
inline void draw_disc(GuidanceMap& map, double cx, double cy, double radius, const Rgb& c) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(map.width - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(map.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    const double dy = y + 0.5 - cy;
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx;
      if (dx * dx + dy * dy <= r2) composite_max(map, x, y, c);
    }
  }
}

// Thick line: every pixel center within thickness / 2 of the segment.
inline void draw_capsule(GuidanceMap& map, double ax, double ay, double bx, double by, double thickness,
                         const Rgb& c) {
  const double half = thickness / 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half)));
  const int x1 = std::min(map.width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + half)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half)));
  const int y1 = std::min(map.height - 1, static_cast<int>(std::ceil(std::max(ay, by) + half)));
  const double vx = bx - ax;
  const double vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  const double h2 = half * half;
  for (int y = y0; y <= y1; ++y) {
    const double py = y + 0.5;
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5;
      double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = px - (ax + t * vx);
      const double dy = py - (ay + t * vy);
      if (dx * dx + dy * dy <= h2) composite_max(map, x, y, c);
    }
  }
}

}  // namespace detail

/// Rasterizes one pose frame. In scaled mode every keypoint and limb color is multiplied by its
/// confidence (a limb takes the smaller of its endpoint confidences); in threshold mode strokes
/// below the threshold are dropped and the rest drawn at full color. Overlaps composite by
/// per-channel max over a black background.
inline GuidanceMap render_frame(const PoseFrame& frame, const RenderStyle& style, int width, int height) {
  if (width < 8 || height < 8) throw std::invalid_argument("render canvas must be at least 8x8");
  style.validate();
  if (!frame.layout) throw std::invalid_argument("pose frame without layout");
  const SkeletonLayout& layout = *frame.layout;

  GuidanceMap map(width, height);
  // Returns the color multiplier, or a negative value when the stroke is skipped.
  auto gain = [&](double conf) -> double {
    if (style.mode == ConfidenceMode::Threshold) return conf < style.threshold ? -1.0 : 1.0;
    return conf > 0.0 ? conf : -1.0;
  };

  for (const Limb& limb : layout.limbs) {
    const Keypoint& a = frame[limb.a];
    const Keypoint& b = frame[limb.b];
    const double g = gain(std::min(a.conf, b.conf));
    if (g < 0.0) continue;
    detail::draw_capsule(map, a.x * width, a.y * height, b.x * width, b.y * height, style.limb_thickness,
                         detail::scale(limb.color, g));
  }
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const Keypoint& k = frame[i];
    const double g = gain(k.conf);
    if (g < 0.0) continue;
    detail::draw_disc(map, k.x * width, k.y * height, style.keypoint_radius,
                      detail::scale(layout.keypoint_colors[i], g));
  }
  return map;
}

inline std::vector<GuidanceMap> render_sequence(const PoseSequence& seq, const RenderStyle& style, int width,
                                                int height) {
  std::vector<GuidanceMap> out;
  out.reserve(seq.size());
  for (const auto& f : seq.frames) out.push_back(render_frame(f, style, width, height));
  return out;
}

/// Binary PPM (P6, maxval 255), channel byte = round(255 * v).
inline std::string encode_ppm(const GuidanceMap& map) {
  std::string out = "P6\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  out.reserve(out.size() + map.data.size());
  for (double v : map.data) {
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)))));
  }
  return out;
}

}  // namespace posediff
