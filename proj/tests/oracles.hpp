#pragma once

// Test-only reference implementations. They deliberately avoid the library's
// code paths (integer rounding, explicit enumeration, scalar loops).

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "stas/tensor.hpp"

namespace oracle {

// Half-up rounding of p% of n for integral p, in integer arithmetic.
inline std::size_t head_tail_count(std::size_t n, std::size_t p) { return (p * n + 50) / 100; }

inline std::set<std::size_t> first_frame(std::size_t latent_frames, std::size_t n) {
  std::set<std::size_t> out;
  for (std::size_t l = 0; l < latent_frames; ++l) {
    for (std::size_t j = 0; j < n; ++j) {
      if (l == 0) out.insert(l * n + j);
    }
  }
  return out;
}

inline std::set<std::size_t> boundary(std::size_t latent_frames, std::size_t n, std::size_t p) {
  const std::size_t k = head_tail_count(n, p);
  std::set<std::size_t> out;
  for (std::size_t l = 0; l < latent_frames; ++l) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j < k || j + k >= n) out.insert(l * n + j);
    }
  }
  return out;
}

inline std::set<std::size_t> target(std::size_t latent_frames, std::size_t n, std::size_t p) {
  auto s = first_frame(latent_frames, n);
  for (auto i : boundary(latent_frames, n, p)) s.insert(i);
  return s;
}

// Explicit pixel-frame -> latent-frame map: frame 0 alone, then r_temp frames per chunk.
inline std::vector<std::size_t> chunk_map(std::size_t latent_frames, std::size_t r_temp) {
  std::vector<std::size_t> map{0};
  for (std::size_t l = 1; l < latent_frames; ++l) {
    for (std::size_t r = 0; r < r_temp; ++r) map.push_back(l);
  }
  return map;
}

// Scalar reference for the global-max steering rule on one column.
inline std::vector<float> steer_column(const std::vector<float>& column, const std::set<std::size_t>& rows,
                                       double alpha) {
  float peak = 0.0f;
  for (float v : column) peak = std::max(peak, std::fabs(v));
  const float magnitude = static_cast<float>(alpha * static_cast<double>(peak));
  std::vector<float> out = column;
  for (std::size_t i : rows) {
    if (column[i] > 0.0f) out[i] = magnitude;
    if (column[i] < 0.0f) out[i] = -magnitude;
  }
  return out;
}

inline stas::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, float scale = 1.0f) {
  std::normal_distribution<float> dist(0.0f, scale);
  stas::Matrix m(rows, cols);
  for (float& v : m.values()) v = dist(rng);
  return m;
}

inline bool bit_equal(float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); }

inline bool bit_equal(const stas::Matrix& a, const stas::Matrix& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bit_equal(a.values()[i], b.values()[i])) return false;
  }
  return true;
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-30});
  return std::fabs(a - b) / scale;
}

}  // namespace oracle
