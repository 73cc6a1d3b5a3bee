#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "stas/tensor.hpp"
#include "stas/topology.hpp"

namespace stas::cli {

struct CommandContext {
  std::string command;
  nlohmann::json config;  // fully resolved
  std::filesystem::path out_dir;
  std::vector<std::string> inputs;
};

struct CommandResult {
  std::vector<std::string> outputs;
  nlohmann::json summary = nlohmann::json::object();
};

CommandResult cmd_generate(const CommandContext& ctx);
CommandResult cmd_profile(const CommandContext& ctx);
CommandResult cmd_ablate(const CommandContext& ctx);
CommandResult cmd_consistency(const CommandContext& ctx);
nlohmann::json cmd_info(const nlohmann::json& config);

// Writes <out_dir>/manifest.json.
void write_manifest(const CommandContext& ctx, const CommandResult& result, double seconds);

// Mean cosine similarity between consecutive latent frames (each frame's rows flattened).
double latent_temporal_smoothness(const Matrix& latent, const TokenTopology& topo);

}  // namespace stas::cli
