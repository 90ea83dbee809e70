#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "posediff/posediff.hpp"

namespace fs = std::filesystem;
using namespace posediff;

namespace {

const std::string kCli = POSEDIFF_CLI;
const fs::path kSamples = POSEDIFF_SAMPLES;

int run(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " >cli_stdout.txt 2>cli_stderr.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::current_path() / ("cli_" + name);
  fs::remove_all(d);
  return d;
}

std::string poses() { return (kSamples / "dance_3f.json").string(); }

}  // namespace

TEST(CliRenderPose, OnePpmPerFrame) {
  const auto out = fresh_dir("render");
  ASSERT_EQ(run("render-pose --poses " + poses() + " --out " + out.string() + " --width 144 --height 256"), 0);
  for (const char* name : {"frame_00000.ppm", "frame_00001.ppm", "frame_00002.ppm"}) {
    const std::string ppm = slurp(out / name);
    ASSERT_EQ(ppm.rfind("P6\n144 256\n255\n", 0), 0u) << name;
    EXPECT_EQ(ppm.size(), std::string("P6\n144 256\n255\n").size() + 144 * 256 * 3);
  }
  EXPECT_FALSE(fs::exists(out / "frame_00003.ppm"));
}

TEST(CliRenderPose, ThresholdModeDiffers) {
  const auto a = fresh_dir("render_scaled"), b = fresh_dir("render_thr");
  ASSERT_EQ(run("render-pose --poses " + poses() + " --out " + a.string() + " --width 144 --height 256"), 0);
  ASSERT_EQ(run("render-pose --poses " + poses() + " --out " + b.string() +
                " --width 144 --height 256 --mode threshold --tau 0.3"),
            0);
  EXPECT_NE(slurp(a / "frame_00000.ppm"), slurp(b / "frame_00000.ppm"));
}

TEST(CliRenderPose, UsageErrors) {
  EXPECT_EQ(run("render-pose --out x --width 64 --height 64"), 2);
  EXPECT_NE(slurp("cli_stderr.txt").find("--poses"), std::string::npos);
  EXPECT_EQ(run("render-pose --poses /nonexistent.json --out x --width 64 --height 64"), 2);
  EXPECT_EQ(run("render-pose --poses " + poses() + " --out x --width 64 --height 64 --mode fuzzy"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST(CliWeightMap, HandWeightValues) {
  const auto out = fresh_dir("weights");
  fs::create_directories(out);
  ASSERT_EQ(run("weight-map --poses " + poses() + " --frame 0 --tau-hand 0.6 --w-hand 10 --out " +
                (out / "w.mmtl").string()),
            0);
  const auto recs = mmtl::read_file((out / "w.mmtl").string());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].dims, (std::vector<std::uint32_t>{1024, 576}));
  EXPECT_EQ(std::set<float>(recs[0].values.begin(), recs[0].values.end()), (std::set<float>{1.0f, 10.0f}));
  EXPECT_EQ(slurp(out / "w.pgm").rfind("P5\n576 1024\n255\n", 0), 0u);

  ASSERT_EQ(run("weight-map --poses " + poses() + " --frame 0 --tau-hand 0.6 --w-hand 1 --out " +
                (out / "ones.mmtl").string()),
            0);
  const auto ones = mmtl::read_file((out / "ones.mmtl").string());
  EXPECT_EQ(std::set<float>(ones[0].values.begin(), ones[0].values.end()), (std::set<float>{1.0f}));
}

TEST(CliWeightMap, FrameOutOfRange) {
  const auto out = fresh_dir("weights_oor");
  EXPECT_EQ(run("weight-map --poses " + poses() + " --frame 3 --tau-hand 0.6 --w-hand 10 --out " +
                (out / "w.mmtl").string()),
            2);
  EXPECT_EQ(run("weight-map --poses " + poses() + " --frame 0 --w-hand 0.5 --out " + (out / "w.mmtl").string()), 2);
}

TEST(CliLongVideo, ModesAndMetrics) {
  const std::string cfg = (kSamples / "longvideo_default.json").string();
  double jump[3];
  int i = 0;
  for (const char* mode : {"progressive", "uniform", "none"}) {
    const auto out = fresh_dir(std::string("long_") + mode);
    ASSERT_EQ(run("longvideo --config " + cfg + " --mode " + mode + " --out " + out.string()), 0);
    for (const char* f : {"latents.mmtl", "profile.txt", "metrics.txt", "plan.txt"}) EXPECT_TRUE(fs::exists(out / f));
    std::istringstream met(slurp(out / "metrics.txt"));
    std::string key;
    met >> key >> jump[i++];
    EXPECT_EQ(key, "boundary_jump");
    const auto recs = mmtl::read_file((out / "latents.mmtl").string());
    EXPECT_EQ(recs[0].dims, (std::vector<std::uint32_t>{36, 4, 8, 8}));
    EXPECT_EQ(slurp(out / "plan.txt"), "36 16 6: 0,10,20\n");
  }
  EXPECT_LT(jump[0], jump[1]);
  EXPECT_LT(jump[0], jump[2]);
}

TEST(CliLongVideo, SameSeedIsByteIdentical) {
  const std::string cfg = (kSamples / "longvideo_default.json").string();
  const auto a = fresh_dir("long_a"), b = fresh_dir("long_b");
  ASSERT_EQ(run("longvideo --config " + cfg + " --out " + a.string()), 0);
  ASSERT_EQ(run("longvideo --config " + cfg + " --out " + b.string() + " --parallel"), 0);
  for (const char* f : {"latents.mmtl", "profile.txt", "metrics.txt"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(CliLongVideo, OverlapNotSmallerThanSegment) {
  EXPECT_EQ(run("longvideo --config " + (kSamples / "longvideo_bad_overlap.json").string() + " --out " +
                fresh_dir("long_bad").string()),
            2);
  EXPECT_NE(slurp("cli_stderr.txt").find("overlap must be smaller than segment length"), std::string::npos);
}

TEST(CliPlan, PrintsPlanText) {
  ASSERT_EQ(run("plan 30 16 6"), 0);
  EXPECT_EQ(slurp("cli_stdout.txt"), "30 16 6: 0,10,14\n");
  EXPECT_EQ(run("plan 30 16 16"), 2);
}

TEST(CliPoseNetInit, WritesWeightsAndManifest) {
  const auto out = fresh_dir("posenet");
  ASSERT_EQ(run("posenet-init --out " + out.string() + " --seed 4"), 0);
  EXPECT_EQ(load_posenet_weights((out / "posenet.mmtl").string()).parameter_count(), 205556u);
  EXPECT_TRUE(fs::exists(out / "posenet_manifest.txt"));
}

TEST(CliRetarget, SelfReferenceKeepsPose) {
  const auto out = fresh_dir("retarget");
  fs::create_directories(out);
  ASSERT_EQ(run("retarget --poses " + poses() + " --reference " + poses() + " --out " + (out / "r.json").string()), 0);
  const auto src = parse_pose_sequence(slurp(poses()));
  const auto got = parse_pose_sequence(slurp(out / "r.json"));
  ASSERT_EQ(got.size(), src.size());
  for (std::size_t k = 0; k < 133; ++k) {
    EXPECT_NEAR(got.frames[0].keypoints[k].x, src.frames[0].keypoints[k].x, 1e-9);
    EXPECT_NEAR(got.frames[0].keypoints[k].y, src.frames[0].keypoints[k].y, 1e-9);
  }
}
