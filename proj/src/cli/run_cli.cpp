#include "stas/cli/run_cli.hpp"

#include <chrono>
#include <ostream>

#include "CLI11.hpp"

#include "stas/cli/commands.hpp"
#include "stas/cli/config.hpp"
#include "stas/error.hpp"

namespace stas::cli {

namespace {

struct CommonFlags {
  std::string config;
  std::string out = "stas_out";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string preset;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file or a previous run manifest");
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed (overrides STAS_SEED and the config file)");
  cmd->add_option("--jobs", f.jobs, "Parallel workers")->check(CLI::PositiveNumber);
  cmd->add_option("--preset", f.preset, "Named backbone preset (wan2.1-1.3b, wan2.2-5b, cogvideox-5b)");
}

Overrides overrides_from(const CLI::App* cmd, const CommonFlags& f) {
  Overrides o;
  if (cmd->count("--config")) o.config_path = f.config;
  if (cmd->count("--seed")) o.seed = f.seed;
  if (cmd->count("--jobs")) o.jobs = f.jobs;
  if (cmd->count("--preset")) o.preset = f.preset;
  return o;
}

int report_error(std::ostream& err, const char* name, const std::string& message, int code) {
  err << nlohmann::json{{"error", name}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Massive-activation profiling and structured activation steering toolkit", "stas"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommonFlags common;
  std::vector<std::string> inputs;
  std::string steering_flag;
  double ma_threshold = 0.0;
  double sigma_mult = 0.0;
  double boundary_p = 0.0;
  std::vector<std::size_t> dims;
  std::size_t r_temp = 0;

  auto* profile = app.add_subcommand("profile", "Profile activation traces (or a toy run) for massive activations");
  add_common(profile, common);
  profile->add_option("inputs", inputs, "Trace files (.stas) and profile snapshots (.json)");
  profile->add_option("--ma-threshold", ma_threshold, "Peak-to-mean ratio above which a candidate is MA");
  profile->add_option("--sigma-mult", sigma_mult, "Candidate cutoff in standard deviations above the mean peak");
  profile->add_option("--p", boundary_p, "Boundary percentage for positional profiles")->check(CLI::Range(0.0, 50.0));
  profile->add_option("--dims", dims, "Dimensions for positional profiles (default: detected MA dims)");

  auto* generate = app.add_subcommand("generate", "Sample latents with or without steering");
  add_common(generate, common);
  generate->add_option("--steering", steering_flag, "Enable or disable steering")->check(CLI::IsMember({"on", "off"}));

  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid over steering variants on the toy model");
  add_common(ablate, common);

  auto* consistency = app.add_subcommand("consistency", "Cross-chunk vs within-chunk frame similarity");
  add_common(consistency, common);
  consistency->add_option("inputs", inputs, "Frame-embedding trace files")->required();
  consistency->add_option("--r-temp", r_temp, "Temporal compression ratio (overrides file metadata)")
      ->check(CLI::PositiveNumber);

  auto* info = app.add_subcommand("info", "Print version, presets and the resolved config");
  add_common(info, common);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "usage", e.what(), kExitInputError);
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    Overrides o = overrides_from(cmd, common);
    if (cmd == generate && !steering_flag.empty()) o.steering_enabled = steering_flag == "on";
    nlohmann::json config = resolve_config(o);
    if (cmd == profile) {
      if (profile->count("--ma-threshold")) config["profile"]["ma_threshold"] = ma_threshold;
      if (profile->count("--sigma-mult")) config["profile"]["sigma_mult"] = sigma_mult;
      if (profile->count("--p")) config["profile"]["p"] = boundary_p;
      if (profile->count("--dims")) config["profile"]["dims"] = dims;
    }
    if (cmd == consistency && consistency->count("--r-temp")) config["consistency"]["r_temp"] = r_temp;

    if (cmd == info) {
      out << cmd_info(config).dump(2) << '\n';
      return kExitOk;
    }

    CommandContext ctx{cmd->get_name(), config, common.out, inputs};
    const auto t0 = std::chrono::steady_clock::now();
    CommandResult result;
    if (cmd == profile) {
      result = cmd_profile(ctx);
    } else if (cmd == generate) {
      result = cmd_generate(ctx);
    } else if (cmd == ablate) {
      result = cmd_ablate(ctx);
    } else {
      result = cmd_consistency(ctx);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(ctx, result, seconds);
    out << nlohmann::json{{"command", ctx.command}, {"outputs", result.outputs}, {"summary", result.summary}}.dump(2)
        << '\n';
    return kExitOk;
  } catch (const Error& e) {
    return report_error(err, e.name(), e.what(), e.kind() == ErrorKind::input ? kExitInputError : kExitRuntimeError);
  } catch (const nlohmann::json::exception& e) {
    return report_error(err, "bad_config", e.what(), kExitInputError);
  } catch (const std::exception& e) {
    return report_error(err, "runtime", e.what(), kExitRuntimeError);
  }
}

}  // namespace stas::cli
