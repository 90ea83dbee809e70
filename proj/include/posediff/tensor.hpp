#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace posediff {

/// Extents of a frame-major 4-D tensor (frames x channels x height x width).
struct Shape4 {
  std::size_t frames = 1;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  constexpr std::size_t frame_size() const { return channels * height * width; }
  constexpr std::size_t plane_size() const { return height * width; }
  constexpr std::size_t size() const { return frames * frame_size(); }

  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    std::ostringstream os;
    os << frames << "x" << channels << "x" << height << "x" << width;
    return os.str();
  }
};

/// Dense row-major F x C x H x W tensor.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape4 shape, T fill = T{}) : shape_(shape) {
    if (shape.frames == 0 || shape.channels == 0 || shape.height == 0 || shape.width == 0) {
      throw std::invalid_argument("tensor dimensions must be >= 1, got " + shape.str());
    }
    data_.assign(shape.size(), fill);
  }

  const Shape4& shape() const { return shape_; }
  std::size_t frames() const { return shape_.frames; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const {
    return ((f * shape_.channels + c) * shape_.height + y) * shape_.width + x;
  }

  T& operator()(std::size_t f, std::size_t c, std::size_t y, std::size_t x) {
    return data_[index(f, c, y, x)];
  }
  const T& operator()(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(f, c, y, x)];
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::span<T> frame(std::size_t f) {
    return std::span<T>(data_).subspan(f * shape_.frame_size(), shape_.frame_size());
  }
  std::span<const T> frame(std::size_t f) const {
    return std::span<const T>(data_).subspan(f * shape_.frame_size(), shape_.frame_size());
  }

  /// Copy of frames [first, first + count).
  Tensor slice_frames(std::size_t first, std::size_t count) const {
    if (count == 0 || first + count > shape_.frames) {
      throw std::out_of_range("frame slice out of range");
    }
    Shape4 s = shape_;
    s.frames = count;
    Tensor out(s);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * shape_.frame_size()),
                count * shape_.frame_size(), out.data_.begin());
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape4 shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

using LatentTensor = Tensor<double>;

inline void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

/// Concatenates tensors along the frame axis.
template <typename T>
Tensor<T> concat_frames(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_frames: no parts");
  Shape4 s = parts.front().shape();
  s.frames = 0;
  for (const auto& p : parts) {
    if (p.channels() != s.channels || p.height() != s.height || p.width() != s.width) {
      throw std::invalid_argument("concat_frames: frame shape mismatch");
    }
    s.frames += p.frames();
  }
  Tensor<T> out(s);
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(at));
    at += p.size();
  }
  return out;
}

}  // namespace posediff
