#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "posediff/skeleton_layout.hpp"

namespace posediff {

/// Normalized image coordinates plus detector confidence.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double conf = 0.0;

  bool on_canvas() const { return x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0; }

  friend constexpr bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct PoseFrame {
  std::vector<Keypoint> keypoints;
  LayoutPtr layout;

  PoseFrame() = default;
  PoseFrame(std::vector<Keypoint> kps, LayoutPtr l) : keypoints(std::move(kps)), layout(std::move(l)) {
    if (!layout) throw std::invalid_argument("pose frame without layout");
    if (keypoints.size() != layout->keypoint_count()) {
      throw std::invalid_argument("keypoint count mismatch: layout '" + layout->name + "' expects " +
                                  std::to_string(layout->keypoint_count()) + ", got " +
                                  std::to_string(keypoints.size()));
    }
  }

  const Keypoint& operator[](std::size_t i) const { return keypoints[i]; }
  std::size_t size() const { return keypoints.size(); }

  friend bool operator==(const PoseFrame& a, const PoseFrame& b) {
    return a.keypoints == b.keypoints && a.layout && b.layout && a.layout->name == b.layout->name;
  }
};

struct PoseSequence {
  std::vector<PoseFrame> frames;
  int source_width = 0;
  int source_height = 0;
  std::optional<double> fps;

  // Load statistics; not part of the pose data itself.
  std::size_t clamped_confidences = 0;
  std::size_t off_canvas_keypoints = 0;

  std::size_t size() const { return frames.size(); }
  const LayoutPtr& layout() const { return frames.front().layout; }

  friend bool operator==(const PoseSequence& a, const PoseSequence& b) {
    return a.frames == b.frames && a.source_width == b.source_width &&
           a.source_height == b.source_height && a.fps == b.fps;
  }
};

class PoseParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads the keypoint interchange document (pixel coordinates, see README).
inline PoseSequence parse_pose_sequence(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw PoseParseError(std::string("malformed pose document: ") + e.what());
  }
  auto require = [&](const char* key) -> const json& {
    if (!doc.is_object() || !doc.contains(key)) {
      throw PoseParseError(std::string("malformed pose document: missing field '") + key + "'");
    }
    return doc.at(key);
  };
  const json& layout_field = require("layout");
  const json& width_field = require("width");
  const json& height_field = require("height");
  const json& frames_field = require("frames");
  if (!layout_field.is_string() || !width_field.is_number_integer() || !height_field.is_number_integer() ||
      !frames_field.is_array()) {
    throw PoseParseError("malformed pose document: wrong field types");
  }

  PoseSequence seq;
  const auto layout_name = layout_field.get<std::string>();
  LayoutPtr layout = find_layout(layout_name);
  if (!layout) throw PoseParseError("unknown layout '" + layout_name + "'");
  const auto w = width_field.get<long long>();
  const auto h = height_field.get<long long>();
  if (w <= 0 || h <= 0) throw PoseParseError("negative or zero source dimensions");
  seq.source_width = static_cast<int>(w);
  seq.source_height = static_cast<int>(h);
  if (doc.contains("fps") && !doc["fps"].is_null()) {
    if (!doc["fps"].is_number()) throw PoseParseError("malformed pose document: fps is not a number");
    seq.fps = doc["fps"].get<double>();
  }
  if (frames_field.empty()) throw PoseParseError("pose document has no frames");

  const double px_w = static_cast<double>(seq.source_width);
  const double px_h = static_cast<double>(seq.source_height);
  for (std::size_t fi = 0; fi < frames_field.size(); ++fi) {
    const json& fr = frames_field[fi];
    if (!fr.is_object() || !fr.contains("keypoints") || !fr["keypoints"].is_array()) {
      throw PoseParseError("malformed pose document: frame " + std::to_string(fi) + " lacks keypoints");
    }
    const json& kps = fr["keypoints"];
    if (kps.size() != layout->keypoint_count()) {
      throw PoseParseError("keypoint count mismatch in frame " + std::to_string(fi) + ": layout '" +
                           layout_name + "' expects " + std::to_string(layout->keypoint_count()) +
                           ", got " + std::to_string(kps.size()));
    }
    std::vector<Keypoint> out;
    out.reserve(kps.size());
    for (const json& t : kps) {
      if (!t.is_array() || t.size() != 3 || !t[0].is_number() || !t[1].is_number() || !t[2].is_number()) {
        throw PoseParseError("malformed pose document: keypoint is not an [x, y, conf] triple");
      }
      Keypoint k{t[0].get<double>() / px_w, t[1].get<double>() / px_h, t[2].get<double>()};
      if (!std::isfinite(k.x) || !std::isfinite(k.y) || !std::isfinite(k.conf)) {
        throw PoseParseError("malformed pose document: non-finite keypoint value");
      }
      if (k.conf < 0.0 || k.conf > 1.0) {
        k.conf = std::clamp(k.conf, 0.0, 1.0);
        ++seq.clamped_confidences;
      }
      if (!k.on_canvas()) ++seq.off_canvas_keypoints;
      out.push_back(k);
    }
    seq.frames.emplace_back(std::move(out), layout);
  }
  return seq;
}

namespace detail {

// Pixel value p with p / dim == normalized exactly, so re-parsing reproduces the stored value.
inline double pixel_preimage(double normalized, double dim) {
  double p = normalized * dim;
  if (p / dim == normalized) return p;
  double up = p, down = p;
  for (int i = 0; i < 8; ++i) {
    up = std::nextafter(up, INFINITY);
    if (up / dim == normalized) return up;
    down = std::nextafter(down, -INFINITY);
    if (down / dim == normalized) return down;
  }
  return p;
}

}  // namespace detail

inline std::string serialize_pose_sequence(const PoseSequence& seq, int indent = -1) {
  using nlohmann::json;
  if (seq.frames.empty()) throw std::invalid_argument("cannot serialize an empty pose sequence");
  json doc;
  doc["layout"] = seq.layout()->name;
  doc["width"] = seq.source_width;
  doc["height"] = seq.source_height;
  if (seq.fps) doc["fps"] = *seq.fps;
  json frames = json::array();
  const double w = seq.source_width;
  const double h = seq.source_height;
  for (const auto& f : seq.frames) {
    json kps = json::array();
    for (const auto& k : f.keypoints) {
      kps.push_back(json::array({detail::pixel_preimage(k.x, w), detail::pixel_preimage(k.y, h), k.conf}));
    }
    frames.push_back(json{{"keypoints", std::move(kps)}});
  }
  doc["frames"] = std::move(frames);
  return doc.dump(indent);
}

// ---------------------------------------------------------------------------
// Limb-length retargeting

struct BoneIssue {
  std::size_t parent = 0;
  std::size_t child = 0;
  std::string message;
};

struct RetargetResult {
  PoseSequence sequence;
  std::vector<BoneIssue> issues;
};

inline constexpr double kDefaultRetargetConfFloor = 0.3;

/// Rescales every bone of every template frame to the reference skeleton's bone length while
/// keeping its direction. Bone lengths are anchored on the template's first frame. Bones whose
/// reference endpoints fall below `conf_floor` keep their template length.
inline RetargetResult retarget_limb_lengths(const PoseSequence& tmpl, const PoseFrame& reference,
                                            double conf_floor = kDefaultRetargetConfFloor) {
  if (tmpl.frames.empty()) throw std::invalid_argument("retarget: empty template");
  const LayoutPtr& layout = tmpl.layout();
  if (!reference.layout || reference.layout->name != layout->name) {
    throw std::invalid_argument("retarget: template and reference layouts differ");
  }
  if (!layout->has_bone_tree()) throw std::invalid_argument("retarget: layout has no bone tree");

  const auto order = layout->bone_order();
  const auto n = layout->keypoint_count();
  const PoseFrame& anchor = tmpl.frames.front();
  auto bone_length = [](const Keypoint& a, const Keypoint& b) { return std::hypot(b.x - a.x, b.y - a.y); };

  RetargetResult result;
  std::vector<double> scale(n, 1.0);
  for (std::size_t c : order) {
    if (c == layout->root_index) continue;
    const auto p = static_cast<std::size_t>(layout->parent[c]);
    if (reference[p].conf < conf_floor || reference[c].conf < conf_floor) continue;
    const double ref_len = bone_length(reference[p], reference[c]);
    const double tmpl_len = bone_length(anchor[p], anchor[c]);
    if (tmpl_len > 0.0) {
      scale[c] = ref_len / tmpl_len;
    } else if (ref_len > 0.0) {
      result.issues.push_back({p, c, "zero-length template bone with nonzero reference bone; left unscaled"});
    }
  }

  result.sequence = tmpl;
  for (std::size_t fi = 0; fi < tmpl.frames.size(); ++fi) {
    const auto& src = tmpl.frames[fi].keypoints;
    auto& dst = result.sequence.frames[fi].keypoints;
    for (std::size_t c : order) {
      if (c == layout->root_index) continue;
      const auto p = static_cast<std::size_t>(layout->parent[c]);
      dst[c].x = dst[p].x + (src[c].x - src[p].x) * scale[c];
      dst[c].y = dst[p].y + (src[c].y - src[p].y) * scale[c];
    }
  }
  return result;
}

}  // namespace posediff
