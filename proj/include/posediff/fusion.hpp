#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "posediff/diffusion.hpp"
#include "posediff/guidance.hpp"
#include "posediff/rng.hpp"
#include "posediff/tensor.hpp"

namespace posediff {

// ---------------------------------------------------------------------------
// Segment planning

struct Segment {
  std::size_t start = 0;
  std::size_t length = 0;

  std::size_t end() const { return start + length; }
  bool contains(std::size_t f) const { return f >= start && f < end(); }

  friend constexpr bool operator==(const Segment&, const Segment&) = default;
};

/// Split of L frames into windows of N frames sharing C frames with their neighbour.
struct SegmentPlan {
  std::size_t total_frames = 0;    // L
  std::size_t segment_frames = 0;  // N
  std::size_t overlap_frames = 0;  // C
  std::vector<Segment> segments;
  bool truncated = false;  // L < N: one short segment

  std::size_t stride() const { return segment_frames - overlap_frames; }
  std::size_t size() const { return segments.size(); }

  /// Overlap [begin, end) between segment i and i + 1.
  std::pair<std::size_t, std::size_t> overlap(std::size_t i) const {
    return {segments[i + 1].start, segments[i].end()};
  }

  /// First and last index of the segments covering frame f.
  std::pair<std::size_t, std::size_t> covering(std::size_t f) const {
    std::size_t first = segments.size(), last = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (segments[i].contains(f)) {
        first = std::min(first, i);
        last = i;
      }
    }
    return {first, last};
  }

  friend bool operator==(const SegmentPlan&, const SegmentPlan&) = default;
};

/// Segments start at 0, N - C, 2(N - C), ...; a final window that would run past L is shifted
/// back to end exactly at L.
inline SegmentPlan plan_segments(std::size_t total, std::size_t seg_frames, std::size_t overlap) {
  if (total < 1) throw std::invalid_argument("video must have at least one frame");
  if (overlap < 1) throw std::invalid_argument("overlap must be at least one frame");
  if (overlap >= seg_frames) throw std::invalid_argument("overlap must be smaller than segment length");
  SegmentPlan plan{total, seg_frames, overlap, {}, false};
  if (total <= seg_frames) {
    plan.segments.push_back({0, total});
    plan.truncated = total < seg_frames;
    return plan;
  }
  const std::size_t stride = seg_frames - overlap;
  for (std::size_t start = 0;; start += stride) {
    if (start + seg_frames >= total) {
      plan.segments.push_back({total - seg_frames, seg_frames});
      break;
    }
    plan.segments.push_back({start, seg_frames});
  }
  return plan;
}

/// "L N C: start,start,..."
inline std::string format_plan(const SegmentPlan& plan) {
  std::ostringstream os;
  os << plan.total_frames << ' ' << plan.segment_frames << ' ' << plan.overlap_frames << ':';
  for (std::size_t i = 0; i < plan.segments.size(); ++i) os << (i ? "," : " ") << plan.segments[i].start;
  return os.str();
}

inline SegmentPlan parse_plan(std::string_view text) {
  std::istringstream is{std::string(text)};
  long long L = -1, N = -1, C = -1;
  char colon = 0;
  if (!(is >> L >> N >> C >> colon) || colon != ':' || L < 1 || N < 1 || C < 1) {
    throw std::invalid_argument("malformed plan text");
  }
  std::vector<std::size_t> starts;
  std::string rest;
  std::getline(is, rest);
  std::istringstream list(rest);
  for (std::string item; std::getline(list, item, ',');) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (v < 0 || item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
      starts.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw std::invalid_argument("malformed plan start '" + item + "'");
    }
  }
  SegmentPlan plan = plan_segments(static_cast<std::size_t>(L), static_cast<std::size_t>(N),
                                   static_cast<std::size_t>(C));
  std::vector<std::size_t> expected;
  for (const auto& s : plan.segments) expected.push_back(s.start);
  if (starts != expected) throw std::invalid_argument("plan starts disagree with L, N, C");
  return plan;
}

// ---------------------------------------------------------------------------
// Fusion weights

/// Weight of the later segment's copy at overlap position k (1-based): k / (C + 1).
constexpr double fusion_weight_next(std::size_t k, std::size_t overlap) {
  return static_cast<double>(k) / static_cast<double>(overlap + 1);
}

constexpr double fusion_weight_prev(std::size_t k, std::size_t overlap) {
  return 1.0 - fusion_weight_next(k, overlap);
}

enum class FusionMode { Progressive, Uniform, None };

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::Progressive: return "progressive";
    case FusionMode::Uniform: return "uniform";
    case FusionMode::None: return "none";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "progressive") return FusionMode::Progressive;
  if (s == "uniform") return FusionMode::Uniform;
  if (s == "none") return FusionMode::None;
  throw std::invalid_argument("unknown fusion mode '" + std::string(s) + "'");
}

namespace detail {

inline void check_segment_latents(const std::vector<LatentTensor>& latents, const SegmentPlan& plan) {
  if (latents.size() != plan.size()) {
    throw std::invalid_argument("expected " + std::to_string(plan.size()) + " segment latents, got " +
                                std::to_string(latents.size()));
  }
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (latents[i].frames() != plan.segments[i].length) {
      throw std::invalid_argument("segment " + std::to_string(i) + " latent has wrong frame count");
    }
    const auto& a = latents[i].shape();
    const auto& b = latents.front().shape();
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
      throw std::invalid_argument("segment latents disagree in frame shape");
    }
  }
}

// Writes `value` (one frame) into every copy of global frame f.
inline void broadcast_frame(std::vector<LatentTensor>& out, const SegmentPlan& plan, std::size_t f,
                            std::size_t first, std::size_t last, const std::vector<double>& value) {
  for (std::size_t s = first; s <= last; ++s) {
    auto dst = out[s].frame(f - plan.segments[s].start);
    std::copy(value.begin(), value.end(), dst.begin());
  }
}

}  // namespace detail

/// Position-weighted blending of overlapped frames. Every fused value is computed from the
/// pre-fusion latents and written to all copies of its frame, so the result does not depend
/// on the order pairs are visited.
///
/// A frame shared by segments i and i + 1 at overlap position k (1-based, counted from the
/// start of segment i + 1) becomes (k / (C + 1)) * z_{i+1} + (1 - k / (C + 1)) * z_i. Where the
/// shifted final window makes an overlap longer than C, positions past C take the later
/// segment's value. A frame covered by three or more windows is blended between its last two.
inline std::vector<LatentTensor> progressive_fuse(const std::vector<LatentTensor>& latents,
                                                  const SegmentPlan& plan) {
  detail::check_segment_latents(latents, plan);
  std::vector<LatentTensor> out = latents;
  const std::size_t fs = latents.front().shape().frame_size();
  const std::size_t C = plan.overlap_frames;
  std::vector<double> fused(fs);
  for (std::size_t f = 0; f < plan.total_frames; ++f) {
    const auto [first, last] = plan.covering(f);
    if (first >= last) continue;
    const std::size_t prev = last - 1;
    const std::size_t k = f - plan.segments[last].start + 1;
    auto zp = latents[prev].frame(f - plan.segments[prev].start);
    auto zn = latents[last].frame(f - plan.segments[last].start);
    if (k <= C) {
      const double wn = fusion_weight_next(k, C);
      const double wp = fusion_weight_prev(k, C);
      // Agreeing copies are kept as is; the blend need not round back to the same value.
      for (std::size_t i = 0; i < fs; ++i) fused[i] = zn[i] == zp[i] ? zn[i] : wn * zn[i] + wp * zp[i];
    } else {
      std::copy(zn.begin(), zn.end(), fused.begin());
    }
    detail::broadcast_frame(out, plan, f, first, last, fused);
  }
  return out;
}

/// Baseline: every copy of an overlapped frame becomes the unweighted mean of all copies.
inline std::vector<LatentTensor> uniform_fuse(const std::vector<LatentTensor>& latents, const SegmentPlan& plan) {
  detail::check_segment_latents(latents, plan);
  std::vector<LatentTensor> out = latents;
  const std::size_t fs = latents.front().shape().frame_size();
  std::vector<double> mean(fs);
  for (std::size_t f = 0; f < plan.total_frames; ++f) {
    const auto [first, last] = plan.covering(f);
    if (first >= last) continue;
    std::fill(mean.begin(), mean.end(), 0.0);
    auto z0 = latents[first].frame(f - plan.segments[first].start);
    std::vector<bool> agree(fs, true);
    for (std::size_t s = first; s <= last; ++s) {
      auto z = latents[s].frame(f - plan.segments[s].start);
      for (std::size_t i = 0; i < fs; ++i) {
        mean[i] += z[i];
        agree[i] = agree[i] && z[i] == z0[i];
      }
    }
    const double n = static_cast<double>(last - first + 1);
    for (std::size_t i = 0; i < fs; ++i) mean[i] = agree[i] ? z0[i] : mean[i] / n;
    detail::broadcast_frame(out, plan, f, first, last, mean);
  }
  return out;
}

inline std::vector<LatentTensor> fuse(const std::vector<LatentTensor>& latents, const SegmentPlan& plan,
                                      FusionMode mode) {
  switch (mode) {
    case FusionMode::Progressive: return progressive_fuse(latents, plan);
    case FusionMode::Uniform: return uniform_fuse(latents, plan);
    case FusionMode::None: detail::check_segment_latents(latents, plan); return latents;
  }
  return latents;
}

/// Each segment contributes the frames up to the next segment's start; the last contributes
/// all of its frames, so the result has exactly L frames.
inline LatentTensor assemble(const std::vector<LatentTensor>& latents, const SegmentPlan& plan) {
  detail::check_segment_latents(latents, plan);
  std::vector<LatentTensor> parts;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::size_t take = i + 1 < plan.size() ? plan.segments[i + 1].start - plan.segments[i].start
                                                 : plan.segments[i].length;
    parts.push_back(take == latents[i].frames() ? latents[i] : latents[i].slice_frames(0, take));
  }
  return concat_frames<double>(parts);
}

/// Largest relative disagreement between copies of any overlapped frame.
inline double overlap_disagreement(const std::vector<LatentTensor>& latents, const SegmentPlan& plan) {
  double worst = 0.0;
  for (std::size_t f = 0; f < plan.total_frames; ++f) {
    const auto [first, last] = plan.covering(f);
    for (std::size_t s = first + 1; first < last && s <= last; ++s) {
      auto a = latents[first].frame(f - plan.segments[first].start);
      auto b = latents[s].frame(f - plan.segments[s].start);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
      }
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Long-video denoising loop

enum class Execution { Serial, Parallel };

struct LongDenoiseOptions {
  int steps = 25;
  FusionMode mode = FusionMode::Progressive;
  std::uint64_t seed = 0;
  Execution execution = Execution::Serial;
  /// Called after fusion at every step with (t, per-segment latents).
  std::function<void(int, const std::vector<LatentTensor>&)> on_step;
};

struct LongDenoiseResult {
  LatentTensor video;                 // L frames
  std::vector<LatentTensor> segments; // final per-segment latents
};

/// Per-segment conditions from one global condition whose pose features span all L frames.
inline std::vector<Condition> split_condition(const Condition& global, const SegmentPlan& plan) {
  std::vector<Condition> out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    Condition c;
    c.ref_latent = global.ref_latent;
    if (!global.pose_features.empty()) {
      c.pose_features = global.pose_features.slice_frames(plan.segments[i].start, plan.segments[i].length);
    }
    c.first_frame = plan.segments[i].start;
    c.segment_index = i;
    out.push_back(std::move(c));
  }
  return out;
}

/// Starts every segment from seeded standard normal latents (generator per segment), then for
/// t = T..1 denoises each segment independently and fuses the overlaps.
inline LongDenoiseResult run_long_denoise(const Denoiser& denoiser, const std::vector<Condition>& conditions,
                                          const SegmentPlan& plan, const LongDenoiseOptions& opt) {
  if (opt.steps < 1) throw std::invalid_argument("denoising needs at least one step");
  if (conditions.size() != plan.size()) throw std::invalid_argument("one condition per segment required");
  const Shape4 frame_shape = conditions.front().ref_latent.shape();
  if (frame_shape.frames != 1) throw std::invalid_argument("reference latent must have exactly one frame");

  std::vector<LatentTensor> z;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    Generator gen = make_generator(opt.seed, i, 0);
    Shape4 s = frame_shape;
    s.frames = plan.segments[i].length;
    z.push_back(standard_normal<double>(s, gen));
  }

  auto step_segment = [&](std::size_t i, int t) {
    LatentTensor next = denoiser(z[i], conditions[i], t);
    if (!(next.shape() == z[i].shape())) {
      throw std::runtime_error("denoiser changed latent shape from " + z[i].shape().str() + " to " +
                               next.shape().str());
    }
    return next;
  };

  for (int t = opt.steps; t >= 1; --t) {
    std::vector<LatentTensor> stepped(plan.size());
    if (opt.execution == Execution::Parallel && plan.size() > 1) {
      std::vector<std::future<LatentTensor>> jobs;
      for (std::size_t i = 0; i < plan.size(); ++i) {
        jobs.push_back(std::async(std::launch::async, step_segment, i, t));
      }
      for (std::size_t i = 0; i < plan.size(); ++i) stepped[i] = jobs[i].get();
    } else {
      for (std::size_t i = 0; i < plan.size(); ++i) stepped[i] = step_segment(i, t);
    }
    z = fuse(stepped, plan, opt.mode);
    if (opt.on_step) opt.on_step(t, z);
  }
  LongDenoiseResult res;
  res.video = assemble(z, plan);
  res.segments = std::move(z);
  return res;
}

inline LongDenoiseResult run_long_denoise(const Denoiser& denoiser, const Condition& global,
                                          const SegmentPlan& plan, const LongDenoiseOptions& opt) {
  return run_long_denoise(denoiser, split_condition(global, plan), plan, opt);
}

// ---------------------------------------------------------------------------
// Temporal smoothness metrics

/// D(t) = mean |frame[t+1] - frame[t]| for t = 0..F-2.
inline std::vector<double> frame_difference_profile(const LatentTensor& frames) {
  if (frames.frames() < 2) throw std::invalid_argument("frame difference needs at least two frames");
  std::vector<double> d;
  for (std::size_t t = 0; t + 1 < frames.frames(); ++t) {
    auto a = frames.frame(t);
    auto b = frames.frame(t + 1);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(b[i] - a[i]);
    d.push_back(s / static_cast<double>(a.size()));
  }
  return d;
}

inline std::vector<double> frame_difference_profile(const std::vector<GuidanceMap>& frames) {
  if (frames.size() < 2) throw std::invalid_argument("frame difference needs at least two frames");
  std::vector<double> d;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    const auto& a = frames[t].data;
    const auto& b = frames[t + 1].data;
    if (a.size() != b.size()) throw std::invalid_argument("raster frames differ in size");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(b[i] - a[i]);
    d.push_back(s / static_cast<double>(a.size()));
  }
  return d;
}

/// Transitions t (frame t -> t + 1) that cross a window edge: into the start of every segment
/// after the first, and out of the end of every segment before the last.
inline std::vector<std::size_t> boundary_transitions(const SegmentPlan& plan) {
  std::vector<std::size_t> out;
  const std::size_t n_trans = plan.total_frames > 0 ? plan.total_frames - 1 : 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (i > 0 && plan.segments[i].start >= 1) out.push_back(plan.segments[i].start - 1);
    if (i + 1 < plan.size()) out.push_back(plan.segments[i].end() - 1);
  }
  std::erase_if(out, [&](std::size_t t) { return t >= n_trans; });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// max over boundary transitions of D(t) - median(D over all other transitions).
inline double boundary_jump_metric(const std::vector<double>& profile, const SegmentPlan& plan) {
  if (plan.size() <= 1) return 0.0;
  if (profile.size() + 1 != plan.total_frames) {
    throw std::invalid_argument("profile length does not match the plan");
  }
  const auto boundary = boundary_transitions(plan);
  std::vector<double> rest;
  for (std::size_t t = 0; t < profile.size(); ++t) {
    if (!std::binary_search(boundary.begin(), boundary.end(), t)) rest.push_back(profile[t]);
  }
  double median = 0.0;
  if (!rest.empty()) {
    std::sort(rest.begin(), rest.end());
    const std::size_t m = rest.size() / 2;
    median = rest.size() % 2 ? rest[m] : 0.5 * (rest[m - 1] + rest[m]);
  }
  double worst = -INFINITY;
  for (auto t : boundary) worst = std::max(worst, profile[t] - median);
  return boundary.empty() ? 0.0 : worst;
}

}  // namespace posediff
