#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "posediff/mmtl.hpp"
#include "posediff/rng.hpp"
#include "posediff/tensor.hpp"

namespace posediff {

struct ConvSpec {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;
  bool silu;  // activation after this layer
};

/// The pose encoder: nine convolutions, SiLU after all but the last, 8x spatial reduction.
inline constexpr std::array<ConvSpec, 9> kPoseNetLayers = {{
    {3, 3, 3, 1, 1, true},
    {3, 16, 4, 2, 1, true},
    {16, 16, 3, 1, 1, true},
    {16, 32, 4, 2, 1, true},
    {32, 32, 3, 1, 1, true},
    {32, 64, 4, 2, 1, true},
    {64, 64, 3, 1, 1, true},
    {64, 128, 3, 1, 1, true},
    {128, 320, 1, 1, 0, false},
}};

inline constexpr std::size_t kPoseNetOutChannels = 320;

constexpr std::size_t conv_param_count(const ConvSpec& s) {
  return s.kernel * s.kernel * s.in_channels * s.out_channels + s.out_channels;
}

constexpr std::size_t posenet_parameter_count() {
  std::size_t n = 0;
  for (const auto& s : kPoseNetLayers) n += conv_param_count(s);
  return n;
}

constexpr std::size_t conv_out_extent(std::size_t in, const ConvSpec& s) {
  return (in + 2 * s.pad - s.kernel) / s.stride + 1;
}

/// Output shape of the pose encoder for an F x 3 x H x W input; throws unless H, W divide by 8.
inline Shape4 posenet_output_shape(const Shape4& in) {
  if (in.channels != 3) throw std::invalid_argument("pose encoder expects 3 input channels");
  if (in.height % 8 != 0 || in.width % 8 != 0) {
    throw std::invalid_argument("pose encoder input height and width must be divisible by 8");
  }
  Shape4 s = in;
  for (const auto& l : kPoseNetLayers) {
    s.channels = l.out_channels;
    s.height = conv_out_extent(s.height, l);
    s.width = conv_out_extent(s.width, l);
  }
  return s;
}

struct ConvLayer {
  ConvSpec spec{};
  std::vector<float> weight;  // out x in x k x k
  std::vector<float> bias;    // out
};

struct PoseNetWeights {
  std::vector<ConvLayer> layers;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.size() != kPoseNetLayers.size()) throw std::invalid_argument("pose encoder needs 9 layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& s = kPoseNetLayers[i];
      const auto& l = layers[i];
      if (l.weight.size() != s.out_channels * s.in_channels * s.kernel * s.kernel ||
          l.bias.size() != s.out_channels) {
        throw std::invalid_argument("pose encoder layer " + std::to_string(i + 1) + " weight shape mismatch");
      }
    }
  }

  /// He-style fan-in normal init, zero biases.
  static PoseNetWeights seeded(std::uint64_t seed) {
    PoseNetWeights w;
    Generator gen(derive_seed(seed, 0x9053, 0));
    for (const auto& s : kPoseNetLayers) {
      ConvLayer l{s, std::vector<float>(s.out_channels * s.in_channels * s.kernel * s.kernel),
                  std::vector<float>(s.out_channels, 0.0f)};
      std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(s.in_channels * s.kernel * s.kernel)));
      for (auto& v : l.weight) v = static_cast<float>(n(gen));
      w.layers.push_back(std::move(l));
    }
    return w;
  }
};

namespace detail {

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

inline Tensor<float> conv2d(const Tensor<float>& in, const ConvLayer& layer) {
  const ConvSpec& s = layer.spec;
  const std::size_t H = in.height(), W = in.width();
  const std::size_t OH = conv_out_extent(H, s), OW = conv_out_extent(W, s);
  Tensor<float> out(Shape4{in.frames(), s.out_channels, OH, OW});
  const auto k = static_cast<long>(s.kernel);
  const auto st = static_cast<long>(s.stride);
  const auto pad = static_cast<long>(s.pad);
  for (std::size_t f = 0; f < in.frames(); ++f) {
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
      float* dst = &out(f, oc, 0, 0);
      std::fill(dst, dst + OH * OW, layer.bias[oc]);
      for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
        const float* src = &in(f, ic, 0, 0);
        const float* wk = &layer.weight[((oc * s.in_channels) + ic) * s.kernel * s.kernel];
        for (long ky = 0; ky < k; ++ky) {
          for (long kx = 0; kx < k; ++kx) {
            const float wv = wk[ky * k + kx];
            // Valid ox range: 0 <= ox * st + kx - pad < W.
            long ox_lo = pad - kx > 0 ? (pad - kx + st - 1) / st : 0;
            long ox_hi = (static_cast<long>(W) - 1 + pad - kx);
            ox_hi = ox_hi < 0 ? -1 : std::min(static_cast<long>(OW) - 1, ox_hi / st);
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const long iy = static_cast<long>(oy) * st + ky - pad;
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              const float* row = src + iy * static_cast<long>(W);
              float* orow = dst + oy * OW;
              for (long ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * row[ox * st + kx - pad];
            }
          }
        }
      }
    }
  }
  if (s.silu) {
    for (auto& v : out.values()) v = silu(v);
  }
  return out;
}

}  // namespace detail

/// F x 3 x H x W guidance -> F x 320 x H/8 x W/8 pose features.
inline Tensor<float> posenet_forward(const Tensor<float>& guidance, const PoseNetWeights& weights) {
  const Shape4 expected = posenet_output_shape(guidance.shape());
  weights.validate();
  Tensor<float> x = guidance;
  for (const auto& layer : weights.layers) x = detail::conv2d(x, layer);
  if (!(x.shape() == expected)) throw std::logic_error("pose encoder produced unexpected shape");
  return x;
}

inline std::string posenet_layer_name(std::size_t i) { return "conv" + std::to_string(i + 1); }

/// Writes the nine (weight, bias) MMTL pairs in layer order plus a text manifest
/// ("<name> <dim> <dim> ..." per record).
inline void save_posenet_weights(const PoseNetWeights& w, const std::string& mmtl_path,
                                 const std::string& manifest_path) {
  w.validate();
  std::vector<mmtl::Record> recs;
  std::ostringstream manifest;
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const auto& s = w.layers[i].spec;
    mmtl::Record kr{{static_cast<std::uint32_t>(s.out_channels), static_cast<std::uint32_t>(s.in_channels),
                     static_cast<std::uint32_t>(s.kernel), static_cast<std::uint32_t>(s.kernel)},
                    w.layers[i].weight};
    mmtl::Record br{{static_cast<std::uint32_t>(s.out_channels)}, w.layers[i].bias};
    for (const auto* r : {&kr, &br}) {
      manifest << posenet_layer_name(i) << (r == &kr ? ".weight" : ".bias");
      for (auto d : r->dims) manifest << ' ' << d;
      manifest << '\n';
    }
    recs.push_back(std::move(kr));
    recs.push_back(std::move(br));
  }
  mmtl::write_file(mmtl_path, recs);
  std::ofstream os(manifest_path);
  if (!os) throw mmtl::FormatError("cannot open " + manifest_path + " for writing");
  os << manifest.str();
}

inline PoseNetWeights load_posenet_weights(const std::string& mmtl_path) {
  const auto recs = mmtl::read_file(mmtl_path);
  if (recs.size() != 2 * kPoseNetLayers.size()) throw mmtl::FormatError("pose encoder file needs 18 records");
  PoseNetWeights w;
  for (std::size_t i = 0; i < kPoseNetLayers.size(); ++i) {
    const auto& s = kPoseNetLayers[i];
    const auto& kr = recs[2 * i];
    const auto& br = recs[2 * i + 1];
    const std::vector<std::uint32_t> kd = {static_cast<std::uint32_t>(s.out_channels),
                                           static_cast<std::uint32_t>(s.in_channels),
                                           static_cast<std::uint32_t>(s.kernel), static_cast<std::uint32_t>(s.kernel)};
    if (kr.dims != kd || br.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(s.out_channels)}) {
      throw mmtl::FormatError("pose encoder layer " + std::to_string(i + 1) + " shape mismatch");
    }
    w.layers.push_back({s, kr.values, br.values});
  }
  return w;
}

}  // namespace posediff
