#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "stas/tensor.hpp"
#include "stas/topology.hpp"

namespace stas {

// Replace with alpha * max_j |x[j, d]| * sign(x[i, d]).
struct GlobalMaxRule {
  double alpha = 1.0;
};

// Multiply by (1 + omega).
struct ScalingRule {
  double omega = 0.0;
};

// Set to zero.
struct DisruptRule {};

using SteeringRule = std::variant<GlobalMaxRule, ScalingRule, DisruptRule>;

std::string rule_name(const SteeringRule& rule);

// What (dims), where (tokens), when (first `steps` denoising steps), how (rule),
// and at which block output (layer).
struct SteeringConfig {
  std::vector<std::size_t> dims;
  TokenSet tokens;
  SteeringRule rule = GlobalMaxRule{1.0};
  std::size_t steps = 0;
  std::size_t layer = 0;
};

// Throws InvalidArgument when dims/tokens/layer exceed the given bounds or the rule
// parameters are out of domain (alpha <= 0, omega <= -1).
void validate(const SteeringConfig& config, std::size_t hidden_size, std::size_t num_tokens, std::size_t num_blocks);

// In-place flavors. Only entries in tokens x dims are written. Every per-dim
// reference max is read from the input before any write.
void apply_stas_inplace(ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                        double alpha);
void apply_scaling_inplace(ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                           double omega);
void disrupt_inplace(ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens);
void apply_rule_inplace(ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                        const SteeringRule& rule);

// Pure flavors.
ActivationTensor apply_stas(const ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                            double alpha);
ActivationTensor apply_scaling(const ActivationTensor& acts, std::span<const std::size_t> dims,
                               const TokenSet& tokens, double omega);
ActivationTensor disrupt(const ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens);
ActivationTensor apply_rule(const ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                            const SteeringRule& rule);

// The steered value for one entry under the global-max rule.
inline float global_max_target(float value, float column_peak, double alpha) noexcept {
  if (value == 0.0f) return value;
  const float magnitude = static_cast<float>(alpha * static_cast<double>(column_peak));
  return value > 0.0f ? magnitude : -magnitude;
}

// Detail-guidance extrapolation: full + omega * (full - degraded).
Matrix dg_combine(const Matrix& full, const Matrix& degraded, double omega);

}  // namespace stas
