#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stas/denoiser.hpp"
#include "stas/steering.hpp"
#include "stas/topology.hpp"
#include "stas/trace_io.hpp"

namespace stas {

struct SamplerConfig {
  std::size_t steps = 50;
  double cfg_scale = 5.0;
  std::optional<SteeringConfig> steering;
  std::uint64_t seed = 0;
  TokenTopology topology;
};

struct SampleOptions {
  bool keep_trajectory = false;
  bool keep_guided = false;  // per-step CFG-combined predictions
  std::vector<std::size_t> capture_blocks;
  // Pre-hook snapshots of the steering layer on every step the gate is open.
  bool capture_replay = false;
  std::string prompt_id = "prompt";
  // When set, captured traces stream here instead of accumulating in the result.
  TraceWriter* trace_sink = nullptr;
};

struct SampleResult {
  LatentTensor final_latent;
  std::vector<LatentTensor> trajectory;  // steps + 1 latents when requested
  std::vector<LatentTensor> guided;
  std::vector<TraceRecord> captured_traces;
  std::vector<TraceRecord> replay_traces;
};

// sigma_k = 1 - k / n for k = 0..n.
std::vector<double> sigma_schedule(std::size_t n);

// Seeded standard Gaussian starting latent.
LatentTensor initial_noise(const TokenTopology& topo, std::size_t channels, std::uint64_t seed);

// (1 - lambda) * uncond + lambda * cond, i.e. uncond + lambda * (cond - uncond).
LatentTensor cfg_combine(const LatentTensor& uncond, const LatentTensor& cond, double lambda);

// Flow-matching Euler sampling with classifier-free guidance. When steering is
// configured, its rule is applied at the steering layer inside both branch
// forwards for steps k < steering.steps.
SampleResult sample(const Denoiser& denoiser, const SamplerConfig& config, std::span<const float> cond,
                    const SampleOptions& options = {});

}  // namespace stas
