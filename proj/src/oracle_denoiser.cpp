#include "stas/denoiser.hpp"

#include "stas/error.hpp"

namespace stas {

LatentTensor oracle_forward(const LatentTensor& z, double sigma, const LatentTensor& target) {
  if (!(sigma > 0.0 && sigma <= 1.0)) {
    throw InvalidArgument("oracle velocity needs sigma in (0, 1], got " + std::to_string(sigma));
  }
  if (!z.same_shape(target)) throw ShapeMismatch("latent " + shape_string(z) + " vs target " + shape_string(target));
  LatentTensor v(z.rows(), z.cols());
  const auto zv = z.values();
  const auto tv = target.values();
  auto out = v.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(zv[i]) - tv[i]) / sigma);
  }
  return v;
}

OracleDenoiser::OracleDenoiser(TokenTopology topo, LatentTensor target, std::size_t conditioning_size)
    : topo_(topo), target_(std::move(target)), conditioning_size_(conditioning_size) {
  if (target_.rows() != topo_.total_tokens()) throw ShapeMismatch("oracle target does not match topology");
}

DenoiserOutput OracleDenoiser::forward(const LatentTensor& z, double sigma, std::span<const float>,
                                       const ForwardOptions& options) const {
  if (options.hook || !options.capture_blocks.empty()) {
    throw InvalidArgument("the oracle denoiser has no blocks to hook or capture");
  }
  return DenoiserOutput{oracle_forward(z, sigma, target_), {}, std::nullopt};
}

}  // namespace stas
