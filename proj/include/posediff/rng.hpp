#pragma once

#include <cstdint>
#include <random>

#include "posediff/tensor.hpp"

namespace posediff {

using Generator = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for the generator owned by (segment, step) under a master seed.
/// Serial and parallel execution derive the same stream for the same task.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t segment, std::uint64_t step) {
  return mix64(mix64(mix64(master) ^ segment) ^ (step * 0xd1b54a32d192ed03ULL));
}

inline Generator make_generator(std::uint64_t master, std::uint64_t segment = 0, std::uint64_t step = 0) {
  return Generator(derive_seed(master, segment, step));
}

template <typename T>
Tensor<T> standard_normal(Shape4 shape, Generator& gen) {
  Tensor<T> out(shape);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : out.values()) v = static_cast<T>(dist(gen));
  return out;
}

}  // namespace posediff
