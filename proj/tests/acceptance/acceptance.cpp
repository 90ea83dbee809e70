// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "posediff/posediff.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace posediff;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Check {
  int id;
  const char* name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> body;
};

Outcome fail(const std::string& why) { return {false, why}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome fusion_algebra() {
  std::size_t checked = 0;
  for (std::size_t N = 2; N <= 64; ++N)
    for (std::size_t C = 1; C < N; ++C)
      for (std::size_t k = 1; k <= C; ++k) {
        const double wn = fusion_weight_next(k, C), wp = fusion_weight_prev(k, C);
        if (wn + wp != 1.0) return fail("w_next + w_prev != 1 at N=" + std::to_string(N) + " C=" + std::to_string(C));
        if (wn != static_cast<double>(k) / static_cast<double>(C + 1)) return fail("w_next != k/(C+1)");
        ++checked;
      }
  return {true, std::to_string(checked) + " (N, C, k) triples"};
}

Outcome overlap_consistency() {
  RunConfig cfg;  // L=36, N=16, C=6, T=25, smoother
  double worst = 0.0;
  int steps = 0;
  run_longvideo(cfg, FusionMode::Progressive, Execution::Serial, [&](int, const std::vector<LatentTensor>& z) {
    ++steps;
    worst = std::max(worst, overlap_disagreement(z, cfg.plan()));
  });
  if (steps != 25) return fail("expected 25 steps, saw " + std::to_string(steps));
  if (!(worst <= 1e-9)) return fail("max relative disagreement " + fmt("%.3g", worst));
  return {true, "max relative disagreement " + fmt("%.3g", worst) + " over 25 steps"};
}

Outcome boundary_ordering() {
  int below_none = 0, at_most_uniform = 0;
  std::string rows;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    const double p = run_longvideo(cfg, FusionMode::Progressive).boundary_jump;
    const double u = run_longvideo(cfg, FusionMode::Uniform).boundary_jump;
    const double n = run_longvideo(cfg, FusionMode::None).boundary_jump;
    below_none += p < n;
    at_most_uniform += p <= u;
    if (seed == 0) rows = "seed 0: progressive " + fmt("%.4f", p) + ", uniform " + fmt("%.4f", u) + ", none " + fmt("%.4f", n);
  }
  const std::string d = "progressive<none " + std::to_string(below_none) + "/10, progressive<=uniform " +
                        std::to_string(at_most_uniform) + "/10; " + rows;
  return {below_none == 10 && at_most_uniform >= 9, d};
}

Outcome single_frame_overlap() {
  std::mt19937_64 gen(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t N = 2 + trial % 15;
    const auto plan = plan_segments(N + (1 + trial % 4) * (N - 1), N, 1);
    std::vector<LatentTensor> segs;
    for (const auto& s : plan.segments) segs.push_back(testing::random_tensor({s.length, 3, 4, 4}, gen));
    const auto a = progressive_fuse(segs, plan), b = uniform_fuse(segs, plan);
    for (std::size_t s = 0; s < segs.size(); ++s)
      for (std::size_t i = 0; i < a[s].size(); ++i)
        worst = std::max(worst, std::abs(a[s][i] - b[s][i]) / std::max(std::abs(b[s][i]), 1e-300));
  }
  return {worst <= 1e-12, "100 cases, max relative difference " + fmt("%.3g", worst)};
}

Outcome rendering_linearity() {
  RenderStyle scaled;
  scaled.keypoint_radius = 3;
  scaled.limb_thickness = 3;
  for (std::size_t idx = 0; idx < 133; ++idx) {
    const double x = 0.1 + 0.8 * static_cast<double>(idx % 11) / 10.0;
    const double y = 0.1 + 0.8 * static_cast<double>(idx % 7) / 6.0;
    const auto full = render_frame(testing::single_keypoint_frame(idx, 1.0, x, y), scaled, 64, 64);
    for (double c : {0.0, 0.25, 0.5, 1.0}) {
      const auto m = render_frame(testing::single_keypoint_frame(idx, c, x, y), scaled, 64, 64);
      for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (m.data[i] != c * full.data[i]) return fail("keypoint " + std::to_string(idx) + " at c=" + fmt("%g", c));
      }
    }
  }
  RenderStyle thr = scaled;
  thr.mode = ConfidenceMode::Threshold;
  thr.threshold = 0.3;
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    PoseFrame f = testing::random_frame(gen);
    for (auto& k : f.keypoints) k.conf = k.conf < 0.5 ? 0.0 : 1.0;
    if (!(render_frame(f, scaled, 96, 128) == render_frame(f, thr, 96, 128))) return fail("modes differ on binary confidences");
  }
  return {true, "133 keypoints x 4 levels exact; 20 binary-confidence frames bitwise equal"};
}

Outcome hand_weighting() {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const PoseFrame reliable = testing::frame_with_hands(gen, 0.7);
  const auto m = build_weight_map(reliable, 0.6, 0.25, kHandLossWeight, 160, 128);
  if (std::set<double>(m.data.begin(), m.data.end()) != std::set<double>{1.0, 10.0}) return fail("value set is not {1, 10}");
  for (int trial = 0; trial < 200; ++trial) {
    const PoseFrame f = testing::frame_with_hands(gen, 0.3);
    double t1 = u(gen), t2 = u(gen);
    if (t1 > t2) std::swap(t1, t2);
    const auto lo = build_weight_map(f, t1, 0.25, kHandLossWeight, 96, 80);
    const auto hi = build_weight_map(f, t2, 0.25, kHandLossWeight, 96, 80);
    for (std::size_t i = 0; i < lo.data.size(); ++i) {
      if (hi.data[i] == 10.0 && lo.data[i] != 10.0) return fail("weighted set grew with tau_hand");
      if (lo.data[i] != 1.0 && lo.data[i] != 10.0) return fail("value outside {1, 10}");
    }
  }
  return {true, "value set {1, 10}; 200 random threshold pairs monotone"};
}

Outcome diffusion_statistics() {
  const auto sched = default_schedule();
  const int t = 500;
  const double ab = sched.alpha_bar(t);
  const std::size_t n = 100000;
  const double x0v = 1.5;
  Generator gen = make_generator(7);
  const LatentTensor x0({1, 1, 1, n}, x0v);
  const auto noise = standard_normal<double>(x0.shape(), gen);
  const auto xt = forward_diffuse(x0, t, sched, noise);
  double mean = 0.0;
  for (double v : xt.values()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : xt.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  const double want_mean = std::sqrt(ab) * x0v, want_var = 1.0 - ab;
  const bool mean_ok = std::abs(mean - want_mean) <= 3.0 * std::sqrt(want_var / static_cast<double>(n));
  const bool var_ok = std::abs(var / want_var - 1.0) <= 0.02;

  Generator sg = make_generator(8);
  const std::size_t m = 1000000;
  double lm = 0.0, lsq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double l = std::log(karras_sigma_sample(SigmaDist{}, sg));
    lm += l;
    lsq += l * l;
  }
  lm /= static_cast<double>(m);
  const double ls = std::sqrt(lsq / static_cast<double>(m) - lm * lm);
  const bool sigma_ok = std::abs(lm - 0.5) <= 0.01 && std::abs(ls - 1.4) <= 0.01;
  const std::string d = "mean err " + fmt("%.2e", mean - want_mean) + ", var ratio " + fmt("%.4f", var / want_var) +
                        ", log-sigma mean " + fmt("%.4f", lm) + " std " + fmt("%.4f", ls);
  return {mean_ok && var_ok && sigma_ok, d};
}

Outcome gradient_correctness() {
  std::mt19937_64 gen(31);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<TrainingSample> batch;
    for (int s = 0; s < 2; ++s) batch.push_back({testing::random_tensor({2, 3, 4, 4}, gen), testing::random_tensor({2, 3, 4, 4}, gen), 1});
    LossWeightMap w(4, 4, 10.0);
    for (int k = 0; k < 4; ++k) w.at(static_cast<int>(gen() % 4), static_cast<int>(gen() % 4)) = 10.0;
    LinearDenoiser model = LinearDenoiser::zeros(3, inst % 2 ? ParamTying::SharedScale : ParamTying::PerChannelAffine);
    if (model.tying == ParamTying::SharedScale) {
      model.a.assign(3, nd(gen));
    } else {
      for (std::size_t c = 0; c < 3; ++c) {
        model.a[c] = nd(gen);
        model.b[c] = nd(gen);
      }
    }
    const auto g = loss_grad_linear(model, batch, w);
    const double h = 1e-5;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    if (model.tying == ParamTying::SharedScale) {
      LinearDenoiser up = model, dn = model;
      for (auto& v : up.a) v += h;
      for (auto& v : dn.a) v -= h;
      worst = std::max(worst, rel(g.a[0], (linear_loss(up, batch, w) - linear_loss(dn, batch, w)) / (2 * h)));
    } else {
      for (std::size_t c = 0; c < 3; ++c)
        for (int which = 0; which < 2; ++which) {
          LinearDenoiser up = model, dn = model;
          (which ? up.b : up.a)[c] += h;
          (which ? dn.b : dn.a)[c] -= h;
          const double fd = (linear_loss(up, batch, w) - linear_loss(dn, batch, w)) / (2 * h);
          worst = std::max(worst, rel(which ? g.b[c] : g.a[c], fd));
        }
    }
  }
  if (!(worst <= 1e-5)) return fail("finite-difference mismatch " + fmt("%.3g", worst));

  // Capacity-limited model: one shared scale cannot fit eps = 2x in the hands and 0.5x elsewhere.
  const Shape4 shape{2, 2, 8, 8};
  LossWeightMap hand(8, 8, kHandLossWeight);
  auto in_hand = [](std::size_t x, std::size_t y) { return x >= 2 && x < 5 && y >= 3 && y < 6; };
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (in_hand(static_cast<std::size_t>(x), static_cast<std::size_t>(y))) hand.at(x, y) = kHandLossWeight;
  std::vector<TrainingSample> batch;
  for (int s = 0; s < 4; ++s) {
    TrainingSample smp{testing::random_tensor(shape, gen), LatentTensor(shape), 1};
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x)
            smp.eps(f, c, y, x) = (in_hand(x, y) ? 2.0 : 0.5) * smp.x_t(f, c, y, x) + 0.05 * nd(gen);
    batch.push_back(std::move(smp));
  }
  auto wls_optimum = [&](const LossWeightMap& w) {
    double sxe = 0.0, sxx = 0.0;
    for (const auto& s : batch)
      for (std::size_t i = 0; i < s.x_t.size(); ++i) {
        const double wp = w.data[i % 64];
        sxe += wp * s.x_t[i] * s.eps[i];
        sxx += wp * s.x_t[i] * s.x_t[i];
      }
    return sxe / sxx;
  };
  auto hand_mse = [&](double a) {
    double s = 0.0;
    std::size_t cnt = 0;
    for (const auto& smp : batch)
      for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x)
              if (in_hand(x, y)) {
                const double r = a * smp.x_t(f, c, y, x) - smp.eps(f, c, y, x);
                s += r * r;
                ++cnt;
              }
    return s / static_cast<double>(cnt);
  };
  const LossWeightMap uniform(8, 8);
  const auto init = LinearDenoiser::zeros(2, ParamTying::SharedScale);
  const double aw = train_toy_denoiser(init, batch, hand, 400, 0.1).model.a[0];
  const double au = train_toy_denoiser(init, batch, uniform, 400, 0.1).model.a[0];
  const double aw_star = wls_optimum(hand), au_star = wls_optimum(uniform);
  const bool at_optima = std::abs(aw - aw_star) <= 1e-6 && std::abs(au - au_star) <= 1e-6;
  const double mse_w = hand_mse(aw), mse_u = hand_mse(au);
  const std::string d = "FD worst " + fmt("%.2e", worst) + "; hand MSE weighted " + fmt("%.4f", mse_w) +
                        " vs unweighted " + fmt("%.4f", mse_u) + "; |a-a*| " +
                        fmt("%.1e", std::max(std::abs(aw - aw_star), std::abs(au - au_star)));
  return {at_optima && mse_w <= mse_u, d};
}

Outcome posenet_shapes() {
  std::size_t table = 0;
  const std::size_t rows[9][3] = {{3, 3, 3},   {3, 16, 4},  {16, 16, 3}, {16, 32, 4},  {32, 32, 3},
                                  {32, 64, 4}, {64, 64, 3}, {64, 128, 3}, {128, 320, 1}};
  for (const auto& r : rows) table += r[0] * r[1] * r[2] * r[2] + r[1];
  const auto w = PoseNetWeights::seeded(1);
  if (w.parameter_count() != table || posenet_parameter_count() != table) return fail("parameter count mismatch");
  Tensor<float> small({1, 3, 64, 64}, 0.5f);
  const auto t0 = std::chrono::steady_clock::now();
  const auto out_small = posenet_forward(small, w);
  const double small_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!(out_small.shape() == Shape4{1, 320, 8, 8})) return fail("64x64 -> " + out_small.shape().str());
  if (small_s >= 10.0) return fail("64x64 forward took " + fmt("%.2f", small_s) + " s");
  Tensor<float> big({1, 3, 576, 1024}, 0.5f);
  const auto out_big = posenet_forward(big, w);
  if (!(out_big.shape() == Shape4{1, 320, 72, 128})) return fail("576x1024 -> " + out_big.shape().str());
  return {true, "1x3x64x64 -> 1x320x8x8 in " + fmt("%.3f", small_s) + " s; 1x3x576x1024 -> 1x320x72x128; " +
                    std::to_string(table) + " parameters"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + POSEDIFF_CLI + "\" " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome determinism() {
  const std::string cfg = (fs::path(POSEDIFF_SAMPLES) / "longvideo_default.json").string();
  const fs::path a = fs::current_path() / "acceptance_run_a", b = fs::current_path() / "acceptance_run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  if (run_cli("longvideo --config " + cfg + " --out " + a.string()) != 0 ||
      run_cli("longvideo --config " + cfg + " --out " + b.string()) != 0) {
    return fail("cli run failed");
  }
  const std::string la = slurp(a / "latents.mmtl");
  if (la.empty() || la != slurp(b / "latents.mmtl")) return fail("latents.mmtl differs between runs");
  RunConfig rc = load_run_config(cfg);
  const auto serial = run_longvideo(rc, FusionMode::Progressive, Execution::Serial);
  const auto parallel = run_longvideo(rc, FusionMode::Progressive, Execution::Parallel);
  if (!(serial.video == parallel.video)) return fail("serial and parallel latents differ");
  return {true, "two CLI runs byte-identical (" + std::to_string(la.size()) + " bytes); serial == parallel bitwise"};
}

}  // namespace

int main() {
  const std::vector<Check> checks = {
      {1, "fusion weight algebra", 1.0, fusion_algebra},
      {2, "overlap consistency every step", 5.0, overlap_consistency},
      {3, "boundary smoothness ordering", 30.0, boundary_ordering},
      {4, "C=1 progressive/uniform coincidence", 0.0, single_frame_overlap},
      {5, "rendering linearity and extremes", 0.0, rendering_linearity},
      {6, "hand weighting value set and monotonicity", 0.0, hand_weighting},
      {7, "diffusion statistics", 10.0, diffusion_statistics},
      {8, "gradient correctness and hand-weighted training", 0.0, gradient_correctness},
      {9, "pose encoder shape contract", 0.0, posenet_shapes},
      {10, "determinism", 0.0, determinism},
  };
  int failures = 0;
  for (const auto& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0 && secs >= c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    failures += !o.pass;
    std::printf("[%s] criterion %2d: %s (%.2f s) - %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(checks.size()) - failures, checks.size());
  return failures == 0 ? 0 : 1;
}
