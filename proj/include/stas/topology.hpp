#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace stas {

// Token layout induced by chunk-wise temporal VAE compression. The first pixel
// frame is encoded alone into latent frame 0; each later latent frame covers
// r_temp pixel frames. Tokens are flattened latent-frame-major, so latent frame
// l owns the contiguous range [l * tokens_per_frame, (l + 1) * tokens_per_frame).
struct TokenTopology {
  std::size_t latent_frames = 1;
  std::size_t tokens_per_frame = 1;
  std::size_t r_temp = 1;
  std::size_t pixel_frames = 1;

  std::size_t total_tokens() const noexcept { return latent_frames * tokens_per_frame; }

  // Latent frame that decodes to pixel frame f.
  std::size_t latent_of_pixel(std::size_t f) const noexcept {
    return f == 0 ? 0 : (f - 1) / r_temp + 1;
  }

  friend bool operator==(const TokenTopology&, const TokenTopology&) = default;
};

TokenTopology build_topology(std::size_t pixel_frames, std::size_t r_temp, std::size_t tokens_per_frame);

// Builds from latent-side counts (as recorded in trace metadata).
TokenTopology topology_from_latent(std::size_t latent_frames, std::size_t tokens_per_frame, std::size_t r_temp);

// Sorted, duplicate-free set of token indices.
class TokenSet {
 public:
  TokenSet() = default;
  // Sorts and deduplicates.
  explicit TokenSet(std::vector<std::size_t> indices);

  static TokenSet range(std::size_t begin, std::size_t end);

  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  bool contains(std::size_t index) const noexcept;
  std::span<const std::size_t> indices() const noexcept { return indices_; }
  auto begin() const noexcept { return indices_.begin(); }
  auto end() const noexcept { return indices_.end(); }

  // Smallest index strictly above every member, or 0 when empty.
  std::size_t bound() const noexcept { return indices_.empty() ? 0 : indices_.back() + 1; }

  friend TokenSet set_union(const TokenSet& a, const TokenSet& b);
  friend TokenSet set_difference(const TokenSet& a, const TokenSet& b);
  friend bool operator==(const TokenSet&, const TokenSet&) = default;

 private:
  std::vector<std::size_t> indices_;
};

TokenSet first_frame_tokens(const TokenTopology& topo);

// Per-latent-frame head/tail count for percentage p, rounded half-up.
std::size_t boundary_count(std::size_t tokens_per_frame, double p);

TokenSet boundary_tokens(const TokenTopology& topo, double p);

// S = first-frame tokens union B(p).
TokenSet target_set(const TokenTopology& topo, double p);

TokenSet all_tokens(const TokenTopology& topo);

enum class PairLabel { cross_chunk, within_chunk };

std::string_view to_string(PairLabel label) noexcept;

// Classifies the consecutive pixel-frame pair (f, f + 1).
PairLabel classify_frame_pair(const TokenTopology& topo, std::size_t f);

enum class TokenGroup { first_frame, boundary, interior };

std::string_view to_string(TokenGroup group) noexcept;

// Disjoint grouping: first_frame = F0, boundary = B(p) \ F0, interior = rest.
std::vector<TokenGroup> token_groups(const TokenTopology& topo, double p);

}  // namespace stas
