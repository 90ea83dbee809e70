#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "posediff/region_weights.hpp"
#include "posediff/rng.hpp"
#include "posediff/tensor.hpp"

namespace posediff {

// ---------------------------------------------------------------------------
// Noise schedule and forward process

/// beta/alpha/alpha_bar indexed by step t = 1..T; alpha_bar(0) is 1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
    if (beta_.empty()) throw std::invalid_argument("schedule needs at least one step");
    alpha_bar_.reserve(beta_.size() + 1);
    alpha_bar_.push_back(1.0);
    for (double b : beta_) {
      if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("beta must lie in (0,1)");
      alpha_.push_back(1.0 - b);
      alpha_bar_.push_back(alpha_bar_.back() * alpha_.back());
    }
  }

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(checked(t, 1) - 1); }
  double alpha(int t) const { return alpha_.at(checked(t, 1) - 1); }
  double alpha_bar(int t) const { return alpha_bar_.at(checked(t, 0)); }

 private:
  std::size_t checked(int t, int lo) const {
    if (t < lo || t > steps()) {
      throw std::out_of_range("step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                              std::to_string(steps()) + "]");
    }
    return static_cast<std::size_t>(t);
  }

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

inline NoiseSchedule linear_beta_schedule(int steps, double beta_first, double beta_last) {
  if (steps < 1) throw std::invalid_argument("schedule step count must be >= 1");
  if (!(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0)) {
    throw std::invalid_argument("need 0 < beta_first <= beta_last < 1");
  }
  std::vector<double> b(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    b[static_cast<std::size_t>(i)] =
        steps == 1 ? beta_first : beta_first + (beta_last - beta_first) * i / static_cast<double>(steps - 1);
  }
  return NoiseSchedule(std::move(b));
}

inline NoiseSchedule default_schedule() { return linear_beta_schedule(1000, 1e-4, 0.02); }

/// sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * noise.
inline LatentTensor forward_diffuse(const LatentTensor& x0, double alpha_bar, const LatentTensor& noise) {
  require_same_shape(x0.shape(), noise.shape(), "forward_diffuse");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw std::invalid_argument("alpha_bar must lie in [0,1]");
  const double a = std::sqrt(alpha_bar);
  const double s = std::sqrt(1.0 - alpha_bar);
  LatentTensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * noise[i];
  return out;
}

inline LatentTensor forward_diffuse(const LatentTensor& x0, int t, const NoiseSchedule& sched,
                                    const LatentTensor& noise) {
  return forward_diffuse(x0, sched.alpha_bar(t), noise);
}

// ---------------------------------------------------------------------------
// Log-normal noise levels

struct SigmaDist {
  double p_mean = 0.5;
  double p_std = 1.4;
};

inline double sigma_from_normal(const SigmaDist& d, double g) { return std::exp(d.p_mean + d.p_std * g); }

/// sigma = exp(p_mean + p_std * g), g ~ N(0, 1).
inline double karras_sigma_sample(const SigmaDist& d, Generator& gen) {
  if (!(d.p_std > 0.0)) throw std::invalid_argument("p_std must be positive");
  std::normal_distribution<double> n(0.0, 1.0);
  return sigma_from_normal(d, n(gen));
}

// ---------------------------------------------------------------------------
// Weighted epsilon loss

namespace detail {

inline void require_weight_grid(const LatentTensor& t, const LossWeightMap& w) {
  if (t.width() != static_cast<std::size_t>(w.width) || t.height() != static_cast<std::size_t>(w.height)) {
    throw std::invalid_argument("loss weight map " + std::to_string(w.width) + "x" + std::to_string(w.height) +
                                " does not match latent grid " + std::to_string(t.width()) + "x" +
                                std::to_string(t.height()));
  }
}

}  // namespace detail

/// Weighted mean of squared errors, the H x W weights broadcast over frames and channels.
inline double weighted_eps_loss(const LatentTensor& eps_hat, const LatentTensor& eps, const LossWeightMap& w) {
  require_same_shape(eps_hat.shape(), eps.shape(), "weighted_eps_loss");
  detail::require_weight_grid(eps, w);
  const std::size_t plane = eps.shape().plane_size();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double wp = w.data[i % plane];
    const double d = eps_hat[i] - eps[i];
    num += wp * d * d;
    den += wp;
  }
  if (!(den > 0.0)) throw std::invalid_argument("loss weights sum to zero");
  return num / den;
}

// ---------------------------------------------------------------------------
// Linear toy epsilon-predictor and its training loop

enum class ParamTying {
  PerChannelAffine,  // eps_hat = a_c * x_t + b_c
  SharedScale,       // eps_hat = a * x_t, one scalar for every channel
};

struct LinearDenoiser {
  std::vector<double> a;  // per channel; all equal under SharedScale
  std::vector<double> b;  // per channel; zero under SharedScale
  ParamTying tying = ParamTying::PerChannelAffine;

  static LinearDenoiser zeros(std::size_t channels, ParamTying tying = ParamTying::PerChannelAffine) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0), tying};
  }

  LatentTensor predict(const LatentTensor& x_t) const {
    if (a.size() != x_t.channels() || b.size() != x_t.channels()) {
      throw std::invalid_argument("linear denoiser channel count mismatch");
    }
    LatentTensor out(x_t.shape());
    const auto& s = x_t.shape();
    for (std::size_t f = 0; f < s.frames; ++f)
      for (std::size_t c = 0; c < s.channels; ++c)
        for (std::size_t p = 0; p < s.plane_size(); ++p) {
          const std::size_t i = (f * s.channels + c) * s.plane_size() + p;
          out[i] = a[c] * x_t[i] + b[c];
        }
    return out;
  }

  friend bool operator==(const LinearDenoiser&, const LinearDenoiser&) = default;
};

struct TrainingSample {
  LatentTensor x_t;
  LatentTensor eps;
  int t = 0;
};

struct LinearGradient {
  std::vector<double> a;
  std::vector<double> b;

  double norm() const {
    double s = 0.0;
    for (double v : a) s += v * v;
    for (double v : b) s += v * v;
    return std::sqrt(s);
  }
};

/// Weighted loss pooled over every sample (one shared normalizer).
inline double linear_loss(const LinearDenoiser& model, const std::vector<TrainingSample>& batch,
                          const LossWeightMap& w) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  double num = 0.0, den = 0.0;
  for (const auto& s : batch) {
    require_same_shape(s.x_t.shape(), s.eps.shape(), "linear_loss");
    detail::require_weight_grid(s.eps, w);
    const auto pred = model.predict(s.x_t);
    const std::size_t plane = s.eps.shape().plane_size();
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double wp = w.data[i % plane];
      const double d = pred[i] - s.eps[i];
      num += wp * d * d;
      den += wp;
    }
  }
  return num / den;
}

/// Closed-form gradient of linear_loss with respect to (a, b). Under SharedScale the shared
/// gradient is reported in every a entry and b is zero.
inline LinearGradient loss_grad_linear(const LinearDenoiser& model, const std::vector<TrainingSample>& batch,
                                       const LossWeightMap& w) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  const std::size_t channels = model.a.size();
  LinearGradient g{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  double den = 0.0;
  for (const auto& s : batch) {
    require_same_shape(s.x_t.shape(), s.eps.shape(), "loss_grad_linear");
    detail::require_weight_grid(s.eps, w);
    const auto pred = model.predict(s.x_t);
    const auto& sh = s.eps.shape();
    for (std::size_t f = 0; f < sh.frames; ++f)
      for (std::size_t c = 0; c < sh.channels; ++c)
        for (std::size_t p = 0; p < sh.plane_size(); ++p) {
          const std::size_t i = (f * sh.channels + c) * sh.plane_size() + p;
          const double wp = w.data[p];
          const double r = pred[i] - s.eps[i];
          g.a[c] += 2.0 * wp * r * s.x_t[i];
          g.b[c] += 2.0 * wp * r;
          den += wp;
        }
  }
  for (auto& v : g.a) v /= den;
  for (auto& v : g.b) v /= den;
  if (model.tying == ParamTying::SharedScale) {
    double total = 0.0;
    for (double v : g.a) total += v;
    g.a.assign(channels, total);
    g.b.assign(channels, 0.0);
  }
  return g;
}

struct TrainResult {
  LinearDenoiser model;
  std::vector<double> loss_trace;  // loss before each step, then the final loss
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& msg, std::vector<double> trace)
      : std::runtime_error(msg), loss_trace(std::move(trace)) {}
  std::vector<double> loss_trace;
};

inline constexpr double kDivergenceLoss = 1e6;

/// Plain gradient descent on the weighted epsilon loss.
inline TrainResult train_toy_denoiser(LinearDenoiser init, const std::vector<TrainingSample>& samples,
                                      const LossWeightMap& w, int steps, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (steps < 0) throw std::invalid_argument("step count must be >= 0");
  TrainResult res{std::move(init), {}};
  res.loss_trace.push_back(linear_loss(res.model, samples, w));
  for (int s = 0; s < steps; ++s) {
    const auto g = loss_grad_linear(res.model, samples, w);
    for (std::size_t c = 0; c < res.model.a.size(); ++c) {
      if (res.model.tying == ParamTying::SharedScale) {
        res.model.a[c] -= lr * g.a[0];
      } else {
        res.model.a[c] -= lr * g.a[c];
        res.model.b[c] -= lr * g.b[c];
      }
    }
    const double loss = linear_loss(res.model, samples, w);
    res.loss_trace.push_back(loss);
    if (!(loss <= kDivergenceLoss)) {
      throw TrainingDiverged("training diverged at step " + std::to_string(s + 1), res.loss_trace);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Denoiser contract and toy stand-ins

/// Conditioning for one segment: reference latent (one frame), pose features for the segment's
/// frames, and where the segment sits on the global timeline.
struct Condition {
  LatentTensor ref_latent;
  LatentTensor pose_features;
  std::size_t first_frame = 0;
  std::size_t segment_index = 0;
};

/// One reverse step at step index t (T down to 1). Must preserve the latent shape.
using Denoiser = std::function<LatentTensor(const LatentTensor& latents, const Condition& cond, int t)>;

/// z + eta * (target - z). The target covers the global timeline and is sliced by
/// cond.first_frame, or matches the segment length exactly.
inline Denoiser make_smoother(LatentTensor target, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("smoother rate must lie in (0,1]");
  return [target = std::move(target), eta](const LatentTensor& z, const Condition& cond, int) {
    const bool global = target.frames() != z.frames() || cond.first_frame != 0;
    if (target.channels() != z.channels() || target.height() != z.height() || target.width() != z.width() ||
        (global && cond.first_frame + z.frames() > target.frames())) {
      throw std::invalid_argument("smoother target shape mismatch");
    }
    const std::size_t base = global ? cond.first_frame * z.shape().frame_size() : 0;
    LatentTensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + eta * (target[base + i] - z[i]);
    return out;
  };
}

/// Smoother whose per-segment target is the segment's pose features.
inline Denoiser make_condition_smoother(double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("smoother rate must lie in (0,1]");
  return [eta](const LatentTensor& z, const Condition& cond, int) {
    require_same_shape(z.shape(), cond.pose_features.shape(), "condition smoother");
    LatentTensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + eta * (cond.pose_features[i] - z[i]);
    return out;
  };
}

/// Exact posterior mean for i.i.d. N(mu, sigma0^2) data under a variance-preserving schedule.
struct GaussianPosterior {
  double mu = 0.0;
  double sigma0 = 1.0;

  double mean(double x_t, double alpha_bar) const {
    const double v = sigma0 * sigma0;
    const double sa = std::sqrt(alpha_bar);
    const double gain = sa * v / (alpha_bar * v + (1.0 - alpha_bar));
    return mu + gain * (x_t - sa * mu);
  }

  LatentTensor mean(const LatentTensor& x_t, double alpha_bar) const {
    LatentTensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean(x_t[i], alpha_bar);
    return out;
  }
};

/// Deterministic DDIM step driven by the Gaussian posterior mean: from step t to t - 1. At t = 1
/// the output is the posterior mean itself.
inline Denoiser make_analytic_gaussian(GaussianPosterior post, NoiseSchedule sched) {
  if (!(post.sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
  return [post, sched = std::move(sched)](const LatentTensor& z, const Condition&, int t) {
    const double ab = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    LatentTensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double x0 = post.mean(z[i], ab);
      const double eps = ab < 1.0 ? (z[i] - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab) : 0.0;
      out[i] = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
    }
    return out;
  };
}

inline Denoiser identity_denoiser() {
  return [](const LatentTensor& z, const Condition&, int) { return z; };
}

struct SmootherKind {
  LatentTensor target;
  double eta = 0.5;
};

struct AnalyticGaussianKind {
  GaussianPosterior posterior;
  NoiseSchedule schedule = default_schedule();
};

using ToyDenoiserKind = std::variant<SmootherKind, AnalyticGaussianKind>;

inline Denoiser make_toy_denoiser(ToyDenoiserKind kind) {
  if (auto* s = std::get_if<SmootherKind>(&kind)) return make_smoother(std::move(s->target), s->eta);
  auto& g = std::get<AnalyticGaussianKind>(kind);
  return make_analytic_gaussian(g.posterior, std::move(g.schedule));
}

}  // namespace posediff
