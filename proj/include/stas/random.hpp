#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "stas/tensor.hpp"

namespace stas {

// Standard normal draws via Box-Muller over raw mt19937_64 output, so streams
// do not depend on the standard library's distribution implementations.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  float next() {
    if (cached_) {
      cached_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = static_cast<float>(r * std::sin(2.0 * std::numbers::pi * u2));
    cached_ = true;
    return static_cast<float>(r * std::cos(2.0 * std::numbers::pi * u2));
  }

 private:
  std::mt19937_64 engine_;
  float spare_ = 0.0f;
  bool cached_ = false;
};

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, float scale = 1.0f) {
  GaussianSource g(seed);
  Matrix m(rows, cols);
  for (float& v : m.values()) v = g.next() * scale;
  return m;
}

}  // namespace stas
