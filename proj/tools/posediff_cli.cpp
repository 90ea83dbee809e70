// posediff: command-line front end for pose guidance rendering, hand loss weights and
// long-video latent fusion experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "posediff/posediff.hpp"

namespace fs = std::filesystem;
using namespace posediff;

namespace {

constexpr int kUsageError = 2;

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

struct RenderArgs {
  std::string poses;
  std::string out;
  int width = 0;
  int height = 0;
  std::string mode = "scaled";
  double tau = 0.3;
};

int cmd_render_pose(const RenderArgs& a) {
  const PoseSequence seq = parse_pose_sequence(read_text(a.poses));
  const ConfidenceMode mode = a.mode == "threshold" ? ConfidenceMode::Threshold : ConfidenceMode::Scaled;
  const RenderStyle style = RenderStyle::for_canvas(a.height, mode, a.tau);
  fs::create_directories(a.out);
  const auto maps = render_sequence(seq, style, a.width, a.height);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.ppm", i);
    write_bytes(fs::path(a.out) / name, encode_ppm(maps[i]));
  }
  if (seq.clamped_confidences > 0) {
    std::cerr << "note: clamped " << seq.clamped_confidences << " confidences into [0,1]\n";
  }
  std::cout << "wrote " << maps.size() << " frames to " << a.out << "\n";
  return 0;
}

struct WeightArgs {
  std::string poses;
  std::string out;
  long frame = 0;
  double tau_hand = kDefaultHandThreshold;
  double w_hand = kHandLossWeight;
  double pad_frac = kDefaultHandPadFrac;
  int width = 0;
  int height = 0;
};

int cmd_weight_map(const WeightArgs& a) {
  const PoseSequence seq = parse_pose_sequence(read_text(a.poses));
  if (a.frame < 0 || static_cast<std::size_t>(a.frame) >= seq.size()) {
    std::cerr << "error: frame index " << a.frame << " out of range [0, " << seq.size() << ")\n";
    return kUsageError;
  }
  const int w = a.width > 0 ? a.width : seq.source_width;
  const int h = a.height > 0 ? a.height : seq.source_height;
  const PoseFrame& frame = seq.frames[static_cast<std::size_t>(a.frame)];
  const LossWeightMap map = build_weight_map(frame, a.tau_hand, a.pad_frac, a.w_hand, w, h);
  mmtl::Record rec{{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)}, {}};
  rec.values.assign(map.data.begin(), map.data.end());
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  mmtl::write_file(out.string(), {rec});
  fs::path preview = out;
  preview.replace_extension(".pgm");
  write_bytes(preview, encode_pgm(map));
  for (HandSide side : {HandSide::Left, HandSide::Right}) {
    const HandRegion r = detect_hand(frame, side, a.tau_hand, a.pad_frac, w, h);
    std::cout << (side == HandSide::Left ? "left" : "right") << " hand: "
              << (r.reliable ? "reliable" : "unreliable");
    if (r.reliable) std::cout << " [" << r.bbox.x0 << "," << r.bbox.y0 << "," << r.bbox.x1 << "," << r.bbox.y1 << ")";
    std::cout << "\n";
  }
  return 0;
}

struct LongVideoArgs {
  std::string config;
  std::string mode = "progressive";
  std::string out;
  bool parallel = false;
};

int cmd_longvideo(const LongVideoArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  const FusionMode mode = parse_fusion_mode(a.mode);
  const LongVideoReport r = run_longvideo(cfg, mode, a.parallel ? Execution::Parallel : Execution::Serial);
  const fs::path dir = a.out.empty() ? fs::path(cfg.output_dir) : fs::path(a.out);
  write_longvideo_outputs(r, dir);
  std::cout << "plan " << format_plan(r.plan) << "\n"
            << "mode " << to_string(mode) << "\n"
            << "boundary_jump " << format_scalar(r.boundary_jump) << "\n"
            << "mean_difference " << format_scalar(r.mean_difference) << "\n";
  return 0;
}

int cmd_plan(long L, long N, long C) {
  if (L < 1 || N < 1 || C < 1) throw std::invalid_argument("L, N and C must be >= 1");
  std::cout << format_plan(plan_segments(static_cast<std::size_t>(L), static_cast<std::size_t>(N),
                                         static_cast<std::size_t>(C)))
            << "\n";
  return 0;
}

int cmd_posenet_init(const std::string& out_dir, std::uint64_t seed) {
  fs::create_directories(out_dir);
  const auto w = PoseNetWeights::seeded(seed);
  save_posenet_weights(w, (fs::path(out_dir) / "posenet.mmtl").string(),
                       (fs::path(out_dir) / "posenet_manifest.txt").string());
  std::cout << "wrote " << w.parameter_count() << " parameters to " << out_dir << "\n";
  return 0;
}

struct RetargetArgs {
  std::string poses;
  std::string reference;
  long reference_frame = 0;
  double conf_floor = kDefaultRetargetConfFloor;
  std::string out;
};

int cmd_retarget(const RetargetArgs& a) {
  const PoseSequence tmpl = parse_pose_sequence(read_text(a.poses));
  const PoseSequence ref = parse_pose_sequence(read_text(a.reference));
  if (a.reference_frame < 0 || static_cast<std::size_t>(a.reference_frame) >= ref.size()) {
    std::cerr << "error: reference frame out of range\n";
    return kUsageError;
  }
  const auto res = retarget_limb_lengths(tmpl, ref.frames[static_cast<std::size_t>(a.reference_frame)], a.conf_floor);
  for (const auto& issue : res.issues) {
    std::cerr << "bone " << issue.parent << "->" << issue.child << ": " << issue.message << "\n";
  }
  write_bytes(a.out, serialize_pose_sequence(res.sequence));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pose-guided video diffusion toolkit"};
  app.require_subcommand(1);

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render-pose", "rasterize a pose file into PPM guidance frames");
  render_cmd->add_option("--poses", render.poses, "keypoint interchange file")->required();
  render_cmd->add_option("--out", render.out, "output directory")->required();
  render_cmd->add_option("--width", render.width, "canvas width")->required()->check(CLI::Range(8, 1 << 15));
  render_cmd->add_option("--height", render.height, "canvas height")->required()->check(CLI::Range(8, 1 << 15));
  render_cmd->add_option("--mode", render.mode, "confidence handling")->check(CLI::IsMember({"scaled", "threshold"}));
  render_cmd->add_option("--tau", render.tau, "threshold for --mode threshold")->check(CLI::Range(0.0, 1.0));

  WeightArgs weights;
  auto* weight_cmd = app.add_subcommand("weight-map", "hand-region loss weight map as MMTL plus PGM preview");
  weight_cmd->add_option("--poses", weights.poses, "keypoint interchange file")->required();
  weight_cmd->add_option("--frame", weights.frame, "frame index")->required();
  weight_cmd->add_option("--tau-hand", weights.tau_hand, "hand reliability threshold")->check(CLI::Range(0.0, 1.0));
  weight_cmd->add_option("--w-hand", weights.w_hand, "loss weight inside reliable hand boxes");
  weight_cmd->add_option("--pad-frac", weights.pad_frac, "box padding as a fraction of the hand extent");
  weight_cmd->add_option("--width", weights.width, "canvas width (default: source width)");
  weight_cmd->add_option("--height", weights.height, "canvas height (default: source height)");
  weight_cmd->add_option("--out", weights.out, "output .mmtl path")->required();

  LongVideoArgs longvideo;
  auto* long_cmd = app.add_subcommand("longvideo", "segmented long-video denoising with latent fusion");
  long_cmd->add_option("--config", longvideo.config, "run configuration (JSON)")->required();
  long_cmd->add_option("--mode", longvideo.mode, "fusion mode")->check(CLI::IsMember({"progressive", "uniform", "none"}));
  long_cmd->add_option("--out", longvideo.out, "output directory (default: config output_dir)");
  long_cmd->add_flag("--parallel", longvideo.parallel, "denoise segments concurrently");

  long plan_l = 0, plan_n = 16, plan_c = 6;
  auto* plan_cmd = app.add_subcommand("plan", "print the segment plan for L frames");
  plan_cmd->add_option("L", plan_l, "total frames")->required();
  plan_cmd->add_option("N", plan_n, "frames per segment");
  plan_cmd->add_option("C", plan_c, "overlapped frames");

  std::string posenet_out;
  std::uint64_t posenet_seed = 0;
  auto* posenet_cmd = app.add_subcommand("posenet-init", "write seeded pose encoder weights and manifest");
  posenet_cmd->add_option("--out", posenet_out, "output directory")->required();
  posenet_cmd->add_option("--seed", posenet_seed, "initialization seed");

  RetargetArgs retarget;
  auto* retarget_cmd = app.add_subcommand("retarget", "map reference limb lengths onto a pose template");
  retarget_cmd->add_option("--poses", retarget.poses, "template pose file")->required();
  retarget_cmd->add_option("--reference", retarget.reference, "reference pose file")->required();
  retarget_cmd->add_option("--reference-frame", retarget.reference_frame, "frame of the reference file");
  retarget_cmd->add_option("--conf-floor", retarget.conf_floor, "minimum reference confidence to rescale a bone");
  retarget_cmd->add_option("--out", retarget.out, "output pose file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*render_cmd) return cmd_render_pose(render);
    if (*weight_cmd) return cmd_weight_map(weights);
    if (*long_cmd) return cmd_longvideo(longvideo);
    if (*plan_cmd) return cmd_plan(plan_l, plan_n, plan_c);
    if (*posenet_cmd) return cmd_posenet_init(posenet_out, posenet_seed);
    if (*retarget_cmd) return cmd_retarget(retarget);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}
