#include "stas/topology.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <string>

#include "stas/error.hpp"

namespace stas {

TokenTopology build_topology(std::size_t pixel_frames, std::size_t r_temp, std::size_t tokens_per_frame) {
  if (pixel_frames < 1) throw InvalidArgument("pixel_frames must be >= 1");
  if (r_temp < 1) throw InvalidArgument("r_temp must be >= 1");
  if (tokens_per_frame < 1) throw InvalidArgument("tokens_per_frame must be >= 1");
  if ((pixel_frames - 1) % r_temp != 0) {
    throw DivisibilityError("pixel_frames - 1 = " + std::to_string(pixel_frames - 1) +
                            " is not divisible by r_temp = " + std::to_string(r_temp));
  }
  TokenTopology topo;
  topo.latent_frames = 1 + (pixel_frames - 1) / r_temp;
  topo.tokens_per_frame = tokens_per_frame;
  topo.r_temp = r_temp;
  topo.pixel_frames = pixel_frames;
  return topo;
}

TokenTopology topology_from_latent(std::size_t latent_frames, std::size_t tokens_per_frame, std::size_t r_temp) {
  if (latent_frames < 1) throw InvalidArgument("latent_frames must be >= 1");
  if (r_temp < 1) throw InvalidArgument("r_temp must be >= 1");
  return build_topology(1 + (latent_frames - 1) * r_temp, r_temp, tokens_per_frame);
}

TokenSet::TokenSet(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

TokenSet TokenSet::range(std::size_t begin, std::size_t end) {
  TokenSet set;
  if (end > begin) {
    set.indices_.resize(end - begin);
    for (std::size_t i = 0; i < end - begin; ++i) set.indices_[i] = begin + i;
  }
  return set;
}

bool TokenSet::contains(std::size_t index) const noexcept {
  return std::binary_search(indices_.begin(), indices_.end(), index);
}

TokenSet set_union(const TokenSet& a, const TokenSet& b) {
  TokenSet out;
  out.indices_.reserve(a.size() + b.size());
  std::set_union(a.indices_.begin(), a.indices_.end(), b.indices_.begin(), b.indices_.end(),
                 std::back_inserter(out.indices_));
  return out;
}

TokenSet set_difference(const TokenSet& a, const TokenSet& b) {
  TokenSet out;
  std::set_difference(a.indices_.begin(), a.indices_.end(), b.indices_.begin(), b.indices_.end(),
                      std::back_inserter(out.indices_));
  return out;
}

TokenSet first_frame_tokens(const TokenTopology& topo) {
  return TokenSet::range(0, topo.tokens_per_frame);
}

std::size_t boundary_count(std::size_t tokens_per_frame, double p) {
  if (!(p >= 0.0 && p <= 50.0)) {
    throw InvalidArgument("boundary percentage must lie in [0, 50], got " + std::to_string(p));
  }
  // p * n is exact for integral p, and x.5 quotients are dyadic, so ties round up reliably.
  const double k = std::floor(p * static_cast<double>(tokens_per_frame) / 100.0 + 0.5);
  return std::min(static_cast<std::size_t>(k), tokens_per_frame);
}

TokenSet boundary_tokens(const TokenTopology& topo, double p) {
  const std::size_t n = topo.tokens_per_frame;
  const std::size_t k = boundary_count(n, p);
  std::vector<std::size_t> out;
  if (k == 0) return TokenSet{};
  out.reserve(topo.latent_frames * std::min(n, 2 * k));
  for (std::size_t l = 0; l < topo.latent_frames; ++l) {
    const std::size_t base = l * n;
    if (2 * k >= n) {
      for (std::size_t j = 0; j < n; ++j) out.push_back(base + j);
    } else {
      for (std::size_t j = 0; j < k; ++j) out.push_back(base + j);
      for (std::size_t j = n - k; j < n; ++j) out.push_back(base + j);
    }
  }
  // Already sorted and unique by construction.
  return TokenSet(std::move(out));
}

TokenSet target_set(const TokenTopology& topo, double p) {
  return set_union(first_frame_tokens(topo), boundary_tokens(topo, p));
}

TokenSet all_tokens(const TokenTopology& topo) { return TokenSet::range(0, topo.total_tokens()); }

std::string_view to_string(PairLabel label) noexcept {
  return label == PairLabel::cross_chunk ? "cross_chunk" : "within_chunk";
}

PairLabel classify_frame_pair(const TokenTopology& topo, std::size_t f) {
  if (topo.pixel_frames < 2 || f >= topo.pixel_frames - 1) {
    throw InvalidArgument("frame pair index " + std::to_string(f) + " out of range for " +
                          std::to_string(topo.pixel_frames) + " pixel frames");
  }
  return topo.latent_of_pixel(f) != topo.latent_of_pixel(f + 1) ? PairLabel::cross_chunk
                                                                 : PairLabel::within_chunk;
}

std::string_view to_string(TokenGroup group) noexcept {
  switch (group) {
    case TokenGroup::first_frame: return "first_frame";
    case TokenGroup::boundary: return "boundary";
    case TokenGroup::interior: return "interior";
  }
  return "unknown";
}

std::vector<TokenGroup> token_groups(const TokenTopology& topo, double p) {
  std::vector<TokenGroup> groups(topo.total_tokens(), TokenGroup::interior);
  for (std::size_t i : boundary_tokens(topo, p)) groups[i] = TokenGroup::boundary;
  for (std::size_t i = 0; i < topo.tokens_per_frame; ++i) groups[i] = TokenGroup::first_frame;
  return groups;
}

}  // namespace stas
