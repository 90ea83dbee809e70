#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "posediff/diffusion.hpp"
#include "posediff/fusion.hpp"
#include "posediff/guidance.hpp"
#include "posediff/mmtl.hpp"
#include "posediff/region_weights.hpp"

namespace posediff {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DenoiserKind { Smoother, AnalyticGaussian };

struct RunConfig {
  // canvas and rendering
  int width = 576;
  int height = 1024;
  double keypoint_radius = 0.0;  // 0: derive from canvas height
  double limb_thickness = 0.0;
  ConfidenceMode confidence_mode = ConfidenceMode::Scaled;
  double tau = 0.3;
  // hand weighting
  double tau_hand = kDefaultHandThreshold;
  double pad_frac = kDefaultHandPadFrac;
  double w_hand = kHandLossWeight;
  // long-video denoising
  std::size_t frames = 36;
  std::size_t segment_frames = 16;
  std::size_t overlap_frames = 6;
  int steps = 25;
  std::size_t latent_channels = 4;
  std::size_t latent_height = 8;
  std::size_t latent_width = 8;
  DenoiserKind denoiser = DenoiserKind::Smoother;
  double eta = 0.3;
  double mu = 0.0;
  double sigma0 = 1.0;
  // synthetic pose-feature trajectory
  double period = 24.0;
  double amplitude = 1.0;
  double phase_perturbation = 0.3;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  RenderStyle render_style() const {
    RenderStyle s = RenderStyle::for_canvas(height, confidence_mode, tau);
    if (keypoint_radius > 0.0) s.keypoint_radius = keypoint_radius;
    if (limb_thickness > 0.0) s.limb_thickness = limb_thickness;
    return s;
  }

  SegmentPlan plan() const { return plan_segments(frames, segment_frames, overlap_frames); }

  /// Re-checks every constraint owned by the modules this config feeds.
  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (width < 8 || height < 8) fail("canvas must be at least 8x8");
    if (keypoint_radius < 0.0 || limb_thickness < 0.0) fail("stroke sizes must be >= 0");
    if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0,1]");
    if (!(tau_hand >= 0.0 && tau_hand <= 1.0)) fail("tau_hand must lie in [0,1]");
    if (!(pad_frac >= 0.0)) fail("pad_frac must be >= 0");
    if (!(w_hand >= 1.0)) fail("w_hand must be >= 1");
    if (steps < 1) fail("steps must be >= 1");
    if (latent_channels < 1 || latent_height < 1 || latent_width < 1) fail("latent dims must be >= 1");
    if (!(eta > 0.0 && eta <= 1.0)) fail("eta must lie in (0,1]");
    if (!(sigma0 > 0.0)) fail("sigma0 must be positive");
    if (!(period > 0.0)) fail("period must be positive");
    try {
      render_style().validate();
      (void)plan();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
};

inline RunConfig parse_run_config(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "width", "height", "keypoint_radius", "limb_thickness", "confidence_mode", "tau", "tau_hand",
      "pad_frac", "w_hand", "frames", "segment_frames", "overlap_frames", "steps", "latent_channels",
      "latent_height", "latent_width", "denoiser", "eta", "mu", "sigma0", "period", "amplitude",
      "phase_perturbation", "seed", "output_dir"};
  for (const auto& [k, v] : doc.items()) {
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  RunConfig c;
  try {
    auto get = [&](const char* k, auto& dst) {
      if (doc.contains(k)) dst = doc[k].get<std::remove_reference_t<decltype(dst)>>();
    };
    auto get_count = [&](const char* k, std::size_t& dst) {
      if (!doc.contains(k)) return;
      const auto v = doc[k].get<long long>();
      if (v < 0) throw ConfigError(std::string(k) + " must be >= 0");
      dst = static_cast<std::size_t>(v);
    };
    get("width", c.width);
    get("height", c.height);
    get("keypoint_radius", c.keypoint_radius);
    get("limb_thickness", c.limb_thickness);
    if (doc.contains("confidence_mode")) {
      const auto m = doc["confidence_mode"].get<std::string>();
      if (m == "scaled") c.confidence_mode = ConfidenceMode::Scaled;
      else if (m == "threshold") c.confidence_mode = ConfidenceMode::Threshold;
      else throw ConfigError("confidence_mode must be 'scaled' or 'threshold'");
    }
    get("tau", c.tau);
    get("tau_hand", c.tau_hand);
    get("pad_frac", c.pad_frac);
    get("w_hand", c.w_hand);
    get_count("frames", c.frames);
    get_count("segment_frames", c.segment_frames);
    get_count("overlap_frames", c.overlap_frames);
    get("steps", c.steps);
    get_count("latent_channels", c.latent_channels);
    get_count("latent_height", c.latent_height);
    get_count("latent_width", c.latent_width);
    if (doc.contains("denoiser")) {
      const auto d = doc["denoiser"].get<std::string>();
      if (d == "smoother") c.denoiser = DenoiserKind::Smoother;
      else if (d == "analytic_gaussian") c.denoiser = DenoiserKind::AnalyticGaussian;
      else throw ConfigError("denoiser must be 'smoother' or 'analytic_gaussian'");
    }
    get("eta", c.eta);
    get("mu", c.mu);
    get("sigma0", c.sigma0);
    get("period", c.period);
    get("amplitude", c.amplitude);
    get("phase_perturbation", c.phase_perturbation);
    get("seed", c.seed);
    get("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

// ---------------------------------------------------------------------------
// Synthetic long-video instance

/// Per-segment pose features: amplitude * sin(2 pi f / period + phi_e + delta_i), with a random
/// phase phi_e per latent element and delta_i = +/- phase_perturbation alternating by segment,
/// so adjacent windows disagree about the same frames.
inline std::vector<Condition> synthetic_conditions(const RunConfig& cfg, const SegmentPlan& plan) {
  const Shape4 fshape{1, cfg.latent_channels, cfg.latent_height, cfg.latent_width};
  Generator gen = make_generator(cfg.seed, 0x5e9u, 0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phi(fshape.frame_size());
  for (auto& p : phi) p = phase(gen);

  std::vector<Condition> out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& seg = plan.segments[i];
    const double delta = (i % 2 == 0 ? -1.0 : 1.0) * cfg.phase_perturbation;
    Shape4 s = fshape;
    s.frames = seg.length;
    LatentTensor feat(s);
    for (std::size_t j = 0; j < seg.length; ++j) {
      const double base = 2.0 * std::numbers::pi * static_cast<double>(seg.start + j) / cfg.period;
      auto fr = feat.frame(j);
      for (std::size_t e = 0; e < fr.size(); ++e) fr[e] = cfg.amplitude * std::sin(base + phi[e] + delta);
    }
    Condition c;
    c.ref_latent = LatentTensor(fshape);
    c.pose_features = std::move(feat);
    c.first_frame = seg.start;
    c.segment_index = i;
    out.push_back(std::move(c));
  }
  return out;
}

inline Denoiser make_config_denoiser(const RunConfig& cfg) {
  if (cfg.denoiser == DenoiserKind::Smoother) return make_condition_smoother(cfg.eta);
  // Linear beta range of a 1000-step schedule stretched over `steps` steps.
  const double k = 1000.0 / cfg.steps;
  return make_analytic_gaussian({cfg.mu, cfg.sigma0},
                                linear_beta_schedule(cfg.steps, std::min(1e-4 * k, 0.5), std::min(0.02 * k, 0.999)));
}

struct LongVideoReport {
  SegmentPlan plan;
  LatentTensor video;
  std::vector<double> profile;
  double boundary_jump = 0.0;
  double mean_difference = 0.0;
};

inline LongVideoReport run_longvideo(const RunConfig& cfg, FusionMode mode,
                                     Execution exec = Execution::Serial,
                                     std::function<void(int, const std::vector<LatentTensor>&)> on_step = {}) {
  cfg.validate();
  LongVideoReport r;
  r.plan = cfg.plan();
  LongDenoiseOptions opt;
  opt.steps = cfg.steps;
  opt.mode = mode;
  opt.seed = cfg.seed;
  opt.execution = exec;
  opt.on_step = std::move(on_step);
  r.video = run_long_denoise(make_config_denoiser(cfg), synthetic_conditions(cfg, r.plan), r.plan, opt).video;
  if (r.video.frames() >= 2) {
    r.profile = frame_difference_profile(r.video);
    r.boundary_jump = boundary_jump_metric(r.profile, r.plan);
    double s = 0.0;
    for (double d : r.profile) s += d;
    r.mean_difference = s / static_cast<double>(r.profile.size());
  }
  return r;
}

inline std::string format_scalar(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// latents.mmtl, profile.txt (one D(t) per line), metrics.txt, plan.txt.
inline void write_longvideo_outputs(const LongVideoReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  mmtl::write_file((dir / "latents.mmtl").string(), {mmtl::from_tensor(r.video)});
  std::ofstream prof(dir / "profile.txt");
  for (double d : r.profile) prof << format_scalar(d) << '\n';
  std::ofstream met(dir / "metrics.txt");
  met << "boundary_jump " << format_scalar(r.boundary_jump) << '\n'
      << "mean_difference " << format_scalar(r.mean_difference) << '\n';
  std::ofstream plan(dir / "plan.txt");
  plan << format_plan(r.plan) << '\n';
  if (!prof || !met || !plan) throw std::runtime_error("failed writing outputs to " + dir.string());
}

}  // namespace posediff
