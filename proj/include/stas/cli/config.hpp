#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "stas/denoiser.hpp"
#include "stas/sampler.hpp"
#include "stas/steering.hpp"

namespace stas::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Every key with its default value; documented in docs/config.md.
nlohmann::json default_config();

struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> preset;
  std::optional<bool> steering_enabled;
};

// Resolution order: flag > STAS_SEED env (seed only) > file > default. A file
// may be a plain config or a run manifest (its "resolved_config" is used).
nlohmann::json resolve_config(const Overrides& overrides);

// Applies a named backbone preset's steering values (dims, layer, alpha, p, K, cfg scale).
void apply_preset(nlohmann::json& config, const std::string& name);

struct Prompt {
  std::string id;
  std::vector<float> cond;
};

TokenTopology topology_from_config(const nlohmann::json& config);
ToyDiTConfig toy_model_from_config(const nlohmann::json& config);
std::vector<Prompt> prompts_from_config(const nlohmann::json& config, std::size_t conditioning_size);

// Target set by name: first | boundary | both | all | none.
TokenSet tokens_by_name(const TokenTopology& topo, const std::string& name, double p);
SteeringRule rule_by_name(const std::string& name, double alpha, double omega);

std::optional<SteeringConfig> steering_from_config(const nlohmann::json& config, const TokenTopology& topo);
SamplerConfig sampler_from_config(const nlohmann::json& config, const TokenTopology& topo);

// Sampling target for the oracle model.
LatentTensor oracle_target(const nlohmann::json& config, const TokenTopology& topo);

}  // namespace stas::cli
