#include "stas/sampler.hpp"

#include <algorithm>

#include "stas/error.hpp"
#include "stas/random.hpp"

namespace stas {

std::vector<double> sigma_schedule(std::size_t n) {
  if (n == 0) throw InvalidArgument("sampling needs at least one step");
  std::vector<double> s(n + 1);
  for (std::size_t k = 0; k <= n; ++k) s[k] = 1.0 - static_cast<double>(k) / static_cast<double>(n);
  return s;
}

LatentTensor initial_noise(const TokenTopology& topo, std::size_t channels, std::uint64_t seed) {
  return gaussian_matrix(topo.total_tokens(), channels, seed);
}

LatentTensor cfg_combine(const LatentTensor& uncond, const LatentTensor& cond, double lambda) {
  if (!uncond.same_shape(cond)) throw ShapeMismatch("CFG branches differ in shape");
  LatentTensor out(cond.rows(), cond.cols());
  const auto u = uncond.values();
  const auto c = cond.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = static_cast<float>((1.0 - lambda) * static_cast<double>(u[i]) + lambda * static_cast<double>(c[i]));
  }
  return out;
}

namespace {

TraceRecord make_trace(const Denoiser& model, const ActivationTensor& acts, std::size_t block, std::size_t step,
                       double sigma, Branch branch, const std::string& prompt_id) {
  const auto& topo = model.topology();
  TraceMeta meta;
  meta.model_id = model.model_id();
  meta.block = static_cast<std::int64_t>(block);
  meta.step_index = static_cast<std::int64_t>(step);
  meta.sigma = sigma;
  meta.branch = branch;
  meta.prompt_id = prompt_id;
  meta.num_tokens = acts.rows();
  meta.hidden_size = acts.cols();
  meta.latent_frames = topo.latent_frames;
  meta.tokens_per_frame = topo.tokens_per_frame;
  meta.r_temp = topo.r_temp;
  return TraceRecord{std::move(meta), acts};
}

}  // namespace

SampleResult sample(const Denoiser& denoiser, const SamplerConfig& config, std::span<const float> cond,
                    const SampleOptions& options) {
  if (config.topology != denoiser.topology()) throw InvalidArgument("sampler topology does not match the denoiser");
  if (!(config.cfg_scale >= 0.0)) throw InvalidArgument("cfg_scale must be >= 0");
  if (cond.size() != denoiser.conditioning_size()) throw ShapeMismatch("conditioning vector has the wrong length");
  const auto sigmas = sigma_schedule(config.steps);
  if (config.steering) {
    const auto& s = *config.steering;
    if (s.steps > config.steps) throw InvalidArgument("steering steps K exceeds sampling steps N");
    validate(s, denoiser.hidden_size(), config.topology.total_tokens(), denoiser.num_blocks());
  }

  const std::vector<float> uncond(cond.size(), 0.0f);
  SampleResult result;
  LatentTensor z = initial_noise(config.topology, denoiser.latent_channels(), config.seed);
  if (options.keep_trajectory) result.trajectory.push_back(z);

  for (std::size_t k = 0; k < config.steps; ++k) {
    const double sigma = sigmas[k];
    ForwardOptions fwd;
    fwd.capture_blocks = options.capture_blocks;
    const bool gate_open = config.steering && k < config.steering->steps;
    if (gate_open) {
      const SteeringConfig& s = *config.steering;
      fwd.hook = BlockHook{s.layer, [&s](ActivationTensor& acts) { apply_rule_inplace(acts, s.dims, s.tokens, s.rule); }};
      fwd.capture_pre_hook = options.capture_replay;
    }

    const auto run_branch = [&](std::span<const float> c, Branch branch) {
      DenoiserOutput out = denoiser.forward(z, sigma, c, fwd);
      for (const auto& [block, acts] : out.captured) {
        auto rec = make_trace(denoiser, acts, block, k, sigma, branch, options.prompt_id);
        if (options.trace_sink) {
          options.trace_sink->append(rec);
        } else {
          result.captured_traces.push_back(std::move(rec));
        }
      }
      if (out.pre_hook) {
        result.replay_traces.push_back(
            make_trace(denoiser, *out.pre_hook, config.steering->layer, k, sigma, branch, options.prompt_id));
      }
      return std::move(out.velocity);
    };

    const LatentTensor d_uncond = run_branch(uncond, Branch::uncond);
    const LatentTensor d_cond = run_branch(cond, Branch::cond);
    LatentTensor guided = cfg_combine(d_uncond, d_cond, config.cfg_scale);
    if (!guided.all_finite()) {
      throw NumericalAbort("non-finite prediction at step " + std::to_string(k), k);
    }

    const double dt = sigmas[k + 1] - sigma;
    auto zv = z.values();
    const auto gv = guided.values();
    for (std::size_t i = 0; i < zv.size(); ++i) zv[i] = static_cast<float>(zv[i] + dt * gv[i]);
    if (!z.all_finite()) throw NumericalAbort("non-finite latent after step " + std::to_string(k), k);

    if (options.keep_guided) result.guided.push_back(std::move(guided));
    if (options.keep_trajectory) result.trajectory.push_back(z);
  }
  result.final_latent = std::move(z);
  return result;
}

}  // namespace stas
