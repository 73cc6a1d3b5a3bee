#include "stas/cli/config.hpp"

#include <cstdlib>
#include <fstream>

#include "stas/error.hpp"
#include "stas/presets.hpp"
#include "stas/random.hpp"

namespace stas::cli {

nlohmann::json default_config() {
  return nlohmann::json::parse(R"({
    "seed": 0,
    "jobs": 1,
    "topology": {"pixel_frames": 9, "r_temp": 4, "tokens_per_frame": 16},
    "model": {
      "kind": "toy",
      "num_blocks": 6,
      "hidden_size": 64,
      "num_heads": 4,
      "mlp_ratio": 4,
      "latent_channels": 4,
      "conditioning_size": 16,
      "param_seed": 1,
      "target_seed": 7,
      "planted": [
        {"block": 2, "dims": [7], "magnitudes": [40.0, 20.0, 4.0], "p": 8, "decay": "proportional_to_sigma"},
        {"block": 2, "dims": [11], "magnitudes": [3.0, 2.0, 1.0], "p": 8, "decay": "proportional_to_sigma"}
      ]
    },
    "sampler": {"steps": 50, "cfg_scale": 5.0},
    "steering": {
      "enabled": true,
      "dims": [7],
      "tokens": "both",
      "p": 8,
      "rule": "max",
      "alpha": 2.5,
      "omega": 0.5,
      "steps": 20,
      "layer": 2
    },
    "prompts": [{"id": "prompt-0", "seed": 100}],
    "capture": {"blocks": [], "file": "traces.stas"},
    "profile": {"ma_threshold": 50.0, "sigma_mult": 3.0, "p": 8, "dims": []},
    "ablate": {
      "dim_sets": {"MA": [7], "weak": [11], "non-MA": [42]},
      "dims": ["MA", "weak", "non-MA"],
      "tokens": ["first", "boundary", "both"],
      "steps": [20],
      "rule": ["max"],
      "p": [8],
      "alpha": [2.5],
      "layer": [2]
    }
  })");
}

namespace {

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

std::uint64_t parse_seed(const std::string& text, const char* origin) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(std::string(origin) + " is not an unsigned integer: '" + text + "'");
  }
}

}  // namespace

nlohmann::json resolve_config(const Overrides& o) {
  nlohmann::json config = default_config();
  if (o.config_path) {
    nlohmann::json file = load_json_file(*o.config_path);
    if (!file.is_object()) throw InvalidArgument("config file must hold a JSON object");
    if (file.contains("resolved_config")) file = file.at("resolved_config");
    config.merge_patch(file);
  }
  if (const char* env = std::getenv("STAS_SEED"); env && *env) config["seed"] = parse_seed(env, "STAS_SEED");
  if (o.preset) apply_preset(config, *o.preset);
  if (o.seed) config["seed"] = *o.seed;
  if (o.jobs) config["jobs"] = *o.jobs;
  if (o.steering_enabled) config["steering"]["enabled"] = *o.steering_enabled;
  if (config.value("jobs", 1) < 1) throw InvalidArgument("jobs must be >= 1");
  return config;
}

void apply_preset(nlohmann::json& config, const std::string& name) {
  const auto preset = find_preset(name);
  if (!preset) throw InvalidArgument("unknown preset '" + name + "'");
  auto& s = config["steering"];
  s["dims"] = {preset->ma_dim};
  s["layer"] = preset->layer;
  s["alpha"] = preset->alpha;
  s["p"] = preset->p;
  s["steps"] = preset->steps_k;
  config["sampler"]["cfg_scale"] = preset->cfg_scale;
  config["profile"]["p"] = preset->p;
  config["profile"]["dims"] = {preset->ma_dim};
  config["preset"] = std::string(preset->name);
}

TokenTopology topology_from_config(const nlohmann::json& config) {
  try {
    const auto& t = config.at("topology");
    return build_topology(t.at("pixel_frames").get<std::size_t>(), t.at("r_temp").get<std::size_t>(),
                          t.at("tokens_per_frame").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad topology config: ") + e.what());
  }
}

ToyDiTConfig toy_model_from_config(const nlohmann::json& config) {
  nlohmann::json m = config.at("model");
  m["seed"] = m.value("param_seed", std::uint64_t{1});
  m["topology"] = config.at("topology");
  return toy_config_from_json(m);
}

std::vector<Prompt> prompts_from_config(const nlohmann::json& config, std::size_t conditioning_size) {
  std::vector<Prompt> out;
  try {
    for (const auto& p : config.at("prompts")) {
      Prompt prompt;
      prompt.id = p.at("id").get<std::string>();
      if (p.contains("cond")) {
        prompt.cond = p.at("cond").get<std::vector<float>>();
        if (prompt.cond.size() != conditioning_size) {
          throw InvalidArgument("prompt '" + prompt.id + "' cond has the wrong length");
        }
      } else {
        const auto v = gaussian_matrix(1, conditioning_size, p.at("seed").get<std::uint64_t>());
        prompt.cond.assign(v.values().begin(), v.values().end());
      }
      out.push_back(std::move(prompt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad prompts config: ") + e.what());
  }
  if (out.empty()) throw InvalidArgument("at least one prompt is required");
  return out;
}

TokenSet tokens_by_name(const TokenTopology& topo, const std::string& name, double p) {
  if (name == "first") return first_frame_tokens(topo);
  if (name == "boundary") return boundary_tokens(topo, p);
  if (name == "both") return target_set(topo, p);
  if (name == "all") return all_tokens(topo);
  if (name == "none") return TokenSet{};
  throw InvalidArgument("unknown token selection '" + name + "' (first|boundary|both|all|none)");
}

SteeringRule rule_by_name(const std::string& name, double alpha, double omega) {
  if (name == "max") return GlobalMaxRule{alpha};
  if (name == "scaling") return ScalingRule{omega};
  if (name == "disrupt") return DisruptRule{};
  throw InvalidArgument("unknown steering rule '" + name + "' (max|scaling|disrupt)");
}

std::optional<SteeringConfig> steering_from_config(const nlohmann::json& config, const TokenTopology& topo) {
  try {
    const auto& s = config.at("steering");
    if (!s.value("enabled", false)) return std::nullopt;
    SteeringConfig out;
    out.dims = s.at("dims").get<std::vector<std::size_t>>();
    const double p = s.at("p").get<double>();
    out.tokens = tokens_by_name(topo, s.at("tokens").get<std::string>(), p);
    out.rule = rule_by_name(s.at("rule").get<std::string>(), s.at("alpha").get<double>(), s.at("omega").get<double>());
    out.steps = s.at("steps").get<std::size_t>();
    out.layer = s.at("layer").get<std::size_t>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad steering config: ") + e.what());
  }
}

SamplerConfig sampler_from_config(const nlohmann::json& config, const TokenTopology& topo) {
  SamplerConfig out;
  try {
    out.steps = config.at("sampler").at("steps").get<std::size_t>();
    out.cfg_scale = config.at("sampler").at("cfg_scale").get<double>();
    out.seed = config.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad sampler config: ") + e.what());
  }
  out.topology = topo;
  out.steering = steering_from_config(config, topo);
  return out;
}

LatentTensor oracle_target(const nlohmann::json& config, const TokenTopology& topo) {
  const auto& m = config.at("model");
  return gaussian_matrix(topo.total_tokens(), m.value("latent_channels", std::size_t{4}),
                         m.value("target_seed", std::uint64_t{7}));
}

}  // namespace stas::cli
