// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "stas/cli/run_cli.hpp"
#include "stas/denoiser.hpp"
#include "stas/error.hpp"
#include "stas/presets.hpp"
#include "stas/profiler.hpp"
#include "stas/random.hpp"
#include "stas/sampler.hpp"
#include "stas/steering.hpp"
#include "stas/topology.hpp"
#include "stas/trace_io.hpp"

namespace fs = std::filesystem;
using namespace stas;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit_s;  // 0 = none
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Topology: exhaustive comparison with brute-force enumeration.
Outcome topology_oracle() {
  std::size_t cases = 0;
  for (std::size_t t_lat = 1; t_lat <= 6; ++t_lat) {
    for (std::size_t r : {1u, 2u, 4u}) {
      const std::size_t frames = 1 + (t_lat - 1) * r;
      const auto chunks = oracle::chunk_map(t_lat, r);
      for (std::size_t n = 1; n <= 12; ++n) {
        const auto topo = build_topology(frames, r, n);
        if (topo.latent_frames != t_lat) return {false, "latent frame count"};
        const auto f0_set = first_frame_tokens(topo);
        const auto f0 = f0_set.indices();
        const auto f0_ref = oracle::first_frame(t_lat, n);
        if (!std::equal(f0.begin(), f0.end(), f0_ref.begin(), f0_ref.end())) return {false, "F0 mismatch"};
        for (std::size_t p = 0; p <= 50; p += 5) {
          const auto b_set = boundary_tokens(topo, static_cast<double>(p));
          const auto s_set = target_set(topo, static_cast<double>(p));
          const auto b = b_set.indices();
          const auto s = s_set.indices();
          const auto b_ref = oracle::boundary(t_lat, n, p);
          const auto s_ref = oracle::target(t_lat, n, p);
          if (!std::equal(b.begin(), b.end(), b_ref.begin(), b_ref.end())) return {false, "B(p) mismatch"};
          if (!std::equal(s.begin(), s.end(), s_ref.begin(), s_ref.end())) return {false, "S mismatch"};
          ++cases;
        }
        for (std::size_t f = 0; f + 1 < frames; ++f) {
          const auto expect = chunks[f] != chunks[f + 1] ? PairLabel::cross_chunk : PairLabel::within_chunk;
          if (classify_frame_pair(topo, f) != expect) return {false, "pair label mismatch"};
        }
      }
    }
  }
  return {true, std::to_string(cases) + " (T_lat, r, n_f, p) cases"};
}

Outcome boundary_indexing_81() {
  const auto topo = build_topology(81, 4, 1);
  const bool ok = classify_frame_pair(topo, 28) == PairLabel::cross_chunk &&
                  classify_frame_pair(topo, 32) == PairLabel::cross_chunk &&
                  classify_frame_pair(topo, 29) == PairLabel::within_chunk && topo.latent_frames == 21;
  return {ok, "pairs (28,29) and (32,33) cross-chunk, T_lat=21"};
}

Outcome steering_contract() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> small(1, 6), wide(1, 24), pct(0, 50);
  std::uniform_real_distribution<double> alpha_dist(0.1, 5.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t frames = 1 + (small(rng) - 1) * 4;
    const auto topo = build_topology(frames, 4, wide(rng));
    const std::size_t hidden = wide(rng);
    const auto x = oracle::random_matrix(rng, topo.total_tokens(), hidden, 4.0f);
    std::vector<std::size_t> dims;
    for (std::size_t d = 0; d < hidden; ++d) {
      if (rng() % 3 == 0) dims.push_back(d);
    }
    const double alpha = alpha_dist(rng);
    const auto tokens = target_set(topo, static_cast<double>(pct(rng)));
    const auto y = apply_stas(x, dims, tokens, alpha);
    const std::set<std::size_t> dim_set(dims.begin(), dims.end());
    for (std::size_t d = 0; d < hidden; ++d) {
      float peak = 0.0f;
      for (std::size_t i = 0; i < x.rows(); ++i) peak = std::max(peak, std::fabs(x(i, d)));
      const float magnitude = static_cast<float>(alpha * static_cast<double>(peak));
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const bool in_mask = dim_set.count(d) && tokens.contains(i);
        if (!in_mask) {
          if (!oracle::bit_equal(x(i, d), y(i, d))) return {false, "entry outside S x M changed"};
          continue;
        }
        if (x(i, d) == 0.0f) {
          if (y(i, d) != 0.0f) return {false, "zero entry changed"};
          continue;
        }
        if (std::signbit(x(i, d)) != std::signbit(y(i, d))) return {false, "sign flipped"};
        if (std::fabs(y(i, d)) != magnitude) return {false, "magnitude differs from alpha * max"};
      }
    }
  }
  return {true, "1000 randomized tensors"};
}

Outcome dg_equivalence() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t tokens = 1 + rng() % 40, hidden = 1 + rng() % 30;
    const auto x = oracle::random_matrix(rng, tokens, hidden, 3.0f);
    std::vector<std::size_t> dims;
    for (std::size_t d = 0; d < hidden; ++d) {
      if (rng() % 2) dims.push_back(d);
    }
    const double omega = std::uniform_real_distribution<double>(-0.9, 3.0)(rng);
    const auto all = TokenSet::range(0, tokens);
    const auto lhs = dg_combine(x, disrupt(x, dims, all), omega);
    const auto rhs = apply_scaling(x, dims, all, omega);
    for (std::size_t i = 0; i < lhs.size(); ++i) {
      const double a = lhs.values()[i], b = rhs.values()[i];
      if (a == b) continue;
      worst = std::max(worst, oracle::rel_err(a, b));
    }
  }
  return {worst <= 1e-6, "max relative error " + fmt("%.3g", worst)};
}

Outcome profiler_table_a1() {
  constexpr std::size_t hidden = 1536;
  const double mean = 45.44 / 58.3;
  const double rest = (hidden * mean - 45.44 - 4.8645) / (hidden - 2);
  ActivationTensor snap(2, hidden);
  std::size_t k = 0;
  for (std::size_t d = 0; d < hidden; ++d) {
    if (d == 1188 || d == 71) continue;
    snap(0, d) = static_cast<float>(rest + ((k++ % 2 == 0) ? 0.05 : -0.05));
  }
  snap(0, 1188) = -45.44f;
  snap(0, 71) = 4.8645f;
  DimensionProfile p(hidden);
  p.accumulate(snap);
  const auto report = classify(p, 50.0, 3.0);
  const bool ok = report.dims_of(DimClass::ma) == std::vector<std::size_t>{1188} &&
                  report.dims_of(DimClass::weak_ma) == std::vector<std::size_t>{71} &&
                  std::round(report.entries[1188].peak_to_mean * 10) / 10 == 58.3 &&
                  std::round(report.entries[71].peak_to_mean * 10) / 10 == 6.2;
  return {ok, "dim 1188 MA at " + fmt("%.2f", report.entries[1188].peak_to_mean) + "x, dim 71 weak-MA at " +
                  fmt("%.2f", report.entries[71].peak_to_mean) + "x"};
}

Outcome streaming_equals_batched() {
  std::mt19937_64 rng(5);
  std::vector<ActivationTensor> snaps;
  DimensionProfile streamed(96);
  for (int i = 0; i < 40; ++i) {
    auto s = oracle::random_matrix(rng, 64, 96);
    s(static_cast<std::size_t>(i), 13) = 400.0f;
    s(static_cast<std::size_t>(i) + 1, 50) = 12.0f;
    snaps.push_back(s);
    streamed.accumulate(s);
  }
  const auto batched = profile_batched(snaps);
  const auto a = classify(streamed), b = classify(batched);
  double worst = 0.0;
  for (std::size_t d = 0; d < 96; ++d) {
    if (a.entries[d].cls != b.entries[d].cls) return {false, "classification differs at dim " + std::to_string(d)};
    worst = std::max(worst, oracle::rel_err(streamed.mean_abs(d), batched.mean_abs(d)));
  }
  return {worst <= 1e-6, "identical classes, max mean relative error " + fmt("%.3g", worst)};
}

Outcome oracle_convergence() {
  const auto topo = build_topology(13, 4, 16);
  const auto target = gaussian_matrix(topo.total_tokens(), 4, 3, 2.0f);
  const OracleDenoiser oracle(topo, target, 8);
  const std::vector<float> cond(8, 0.5f);
  double worst = 0.0;
  for (std::size_t n : {1u, 4u, 50u}) {
    SamplerConfig config;
    config.steps = n;
    config.topology = topo;
    config.seed = 11 + n;
    const auto z = sample(oracle, config, cond).final_latent;
    for (std::size_t i = 0; i < z.size(); ++i) {
      worst = std::max(worst, std::fabs(static_cast<double>(z.values()[i]) - target.values()[i]));
    }
  }
  return {worst <= 1e-5, "max-abs error " + fmt("%.3g", worst) + " over N in {1, 4, 50}"};
}

ToyDiTConfig toy_with_planted(BiasDecay decay) {
  ToyDiTConfig c;
  c.seed = 1;
  c.planted.push_back({2, {7}, {40.0f, 20.0f, 4.0f}, 8.0, decay});
  return c;
}

std::vector<float> cond_vector(std::size_t size, std::uint64_t seed) {
  const auto m = gaussian_matrix(1, size, seed);
  return {m.values().begin(), m.values().end()};
}

Outcome gate_end_to_end() {
  const auto preset = *find_preset("wan2.1-1.3b");
  const auto model = ToyDiT::init_params(toy_with_planted(BiasDecay::proportional_to_sigma));
  const auto& topo = model.topology();
  const std::size_t layer = 2, dim = 7;
  SteeringConfig steer{{dim}, target_set(topo, preset.p), GlobalMaxRule{preset.alpha}, preset.steps_k, layer};
  SamplerConfig config;
  config.steps = 50;
  config.cfg_scale = preset.cfg_scale;
  config.topology = topo;
  config.seed = 9;
  config.steering = steer;
  SampleOptions opts;
  opts.keep_trajectory = true;
  opts.capture_blocks = {layer};
  const auto cond = cond_vector(model.conditioning_size(), 100);
  const std::vector<float> uncond(cond.size(), 0.0f);
  const auto result = sample(model, config, cond, opts);
  const auto sigmas = sigma_schedule(config.steps);

  std::size_t checked = 0, steered_entries = 0;
  double worst = 0.0;
  for (const auto& rec : result.captured_traces) {
    const auto k = static_cast<std::size_t>(rec.meta.step_index);
    // Unsteered pass over the same latent: what the block emits without the hook.
    ForwardOptions fwd;
    fwd.capture_blocks = {layer};
    const auto& c = rec.meta.branch == Branch::cond ? cond : uncond;
    const auto ref = model.forward(result.trajectory[k], sigmas[k], c, fwd).captured.at(layer);
    float peak = 0.0f;
    for (std::size_t i = 0; i < ref.rows(); ++i) peak = std::max(peak, std::fabs(ref(i, dim)));
    const double expect = preset.alpha * static_cast<double>(peak);
    for (std::size_t i = 0; i < ref.rows(); ++i) {
      for (std::size_t d = 0; d < ref.cols(); ++d) {
        const bool in_mask = k < preset.steps_k && d == dim && steer.tokens.contains(i);
        const bool differs = !oracle::bit_equal(ref(i, d), rec.data(i, d));
        if (!in_mask && differs) return {false, "trace differs outside S x M or after K at step " + std::to_string(k)};
        if (in_mask && ref(i, d) != 0.0f) {
          if (!differs && std::fabs(ref(i, d)) != static_cast<float>(expect)) return {false, "steered entry unchanged"};
          worst = std::max(worst, oracle::rel_err(std::fabs(rec.data(i, d)), expect));
          if (std::signbit(rec.data(i, d)) != std::signbit(ref(i, d))) return {false, "sign flipped"};
          ++steered_entries;
        }
      }
    }
    ++checked;
  }
  const bool ok = checked == 2 * config.steps && worst <= 1e-6 &&
                  steered_entries == 2 * preset.steps_k * steer.tokens.size();
  return {ok, std::to_string(checked) + " layer traces, " + std::to_string(steered_entries) +
                  " steered entries, max value error " + fmt("%.3g", worst)};
}

// Boundary-to-interior ratio at the planted dim across the 50-step sigma sequence,
// pooled over several latents.
Outcome fig2b_ratio() {
  ToyDiTConfig c = toy_with_planted(BiasDecay::proportional_to_sigma);
  c.topology = build_topology(9, 4, 32);
  const auto model = ToyDiT::init_params(c);
  const auto sigmas = sigma_schedule(50);
  PositionalProfile positional(c.topology, 8.0, {7});
  ForwardOptions fwd;
  fwd.capture_blocks = {2};
  for (std::uint64_t prompt = 0; prompt < 4; ++prompt) {
    const auto cond = cond_vector(model.conditioning_size(), prompt);
    const auto z = initial_noise(c.topology, model.latent_channels(), 500 + prompt);
    for (std::size_t k = 0; k < 50; ++k) {
      positional.accumulate(model.forward(z, sigmas[k], cond, fwd).captured.at(2), static_cast<std::int64_t>(k));
    }
  }
  const auto series = boundary_interior_ratio(positional);
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (!series[i].ratio || !series[i - 1].ratio || !(*series[i].ratio < *series[i - 1].ratio)) {
      return {false, "ratio not strictly decreasing at step " + std::to_string(i)};
    }
  }
  const double first = *series.front().ratio, last = *series.back().ratio;
  const bool ok = series.size() == 50 && std::fabs(last - 1.0) <= 0.25 * (first - 1.0);
  return {ok, "ratio " + fmt("%.3f", first) + " -> " + fmt("%.3f", last) + ", strictly decreasing over " +
                  std::to_string(series.size()) + " sigma levels"};
}

// Many short runs, interleaved ABBA so drift in machine speed hits both arms alike.
// The verdict uses the median of per-pair ratios, which cancels slow drift that
// per-arm medians pick up on a shared, noisy core.
Outcome overhead() {
  ToyDiTConfig c = toy_with_planted(BiasDecay::proportional_to_sigma);
  c.topology = build_topology(9, 4, 4);
  const auto model = ToyDiT::init_params(c);
  const auto cond = cond_vector(model.conditioning_size(), 1);
  SamplerConfig plain;
  plain.steps = 50;
  plain.topology = c.topology;
  SamplerConfig steered = plain;
  steered.steering = SteeringConfig{{7}, target_set(c.topology, 8.0), GlobalMaxRule{2.5}, 20, 2};
  const auto timed = [&](const SamplerConfig& cfg) {
    const auto t0 = Clock::now();
    sample(model, cfg, cond);
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };
  for (int i = 0; i < 3; ++i) {
    timed(plain);
    timed(steered);
  }
  constexpr int kPairs = 201;
  std::vector<double> a, b, ratio;
  for (int i = 0; i < kPairs; ++i) {
    double x = 0, y = 0;
    if (i % 2 == 0) {
      x = timed(plain);
      y = timed(steered);
    } else {
      y = timed(steered);
      x = timed(plain);
    }
    a.push_back(x);
    b.push_back(y);
    ratio.push_back(y / x);
  }
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double ma = median(a), mb = median(b), rel = median(ratio) - 1.0;
  return {std::fabs(rel) < 0.01, "paired median " + fmt("%+.2f", rel * 100) + "% over " + std::to_string(kPairs) +
                                     " pairs (arm medians " + fmt("%.2f", ma * 1e3) + " vs " + fmt("%.2f", mb * 1e3) +
                                     " ms)"};
}

TraceRecord random_record(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> small(1, 4), n(1, 6), h(1, 12);
  const std::size_t r = small(rng), t_lat = small(rng), nf = n(rng), hidden = h(rng);
  TraceMeta meta;
  meta.model_id = "m" + std::to_string(rng() % 1000);
  meta.block = static_cast<std::int64_t>(rng() % 40);
  meta.step_index = static_cast<std::int64_t>(rng() % 50);
  meta.sigma = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  meta.branch = rng() % 2 ? Branch::cond : Branch::uncond;
  meta.prompt_id = "prompt \"" + std::to_string(rng()) + "\" \xc3\xa9";
  meta.num_tokens = t_lat * nf;
  meta.hidden_size = hidden;
  meta.latent_frames = t_lat;
  meta.tokens_per_frame = nf;
  meta.r_temp = r;
  Matrix data(meta.num_tokens, hidden);
  std::uniform_int_distribution<std::uint32_t> bits;
  for (float& v : data.values()) {
    do {
      v = std::bit_cast<float>(bits(rng));
    } while (!std::isfinite(v));
  }
  return {meta, data};
}

Outcome trace_round_trip() {
  std::mt19937_64 rng(10000);
  std::vector<TraceRecord> records;
  for (int i = 0; i < 10000; ++i) records.push_back(random_record(rng));
  std::stringstream buf;
  write_records(records, buf);
  const auto back = read_records(buf);
  if (back.size() != records.size()) return {false, "record count differs"};
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!(back[i].meta == records[i].meta) || !oracle::bit_equal(back[i].data, records[i].data)) {
      return {false, "record " + std::to_string(i) + " differs"};
    }
  }
  const std::vector<std::pair<std::string, TraceErrorCode>> fixtures{
      {"corrupt_bad_magic.stas", TraceErrorCode::bad_magic},
      {"corrupt_unsupported_version.stas", TraceErrorCode::unsupported_version},
      {"corrupt_truncated.stas", TraceErrorCode::truncated},
      {"corrupt_non_finite.stas", TraceErrorCode::non_finite},
      {"corrupt_bad_metadata.stas", TraceErrorCode::bad_metadata},
  };
  for (const auto& [name, code] : fixtures) {
    try {
      read_trace_file(std::string(STAS_FIXTURE_DIR) + "/" + name);
      return {false, name + " parsed without error"};
    } catch (const TraceError& e) {
      if (e.code() != code) return {false, name + " raised " + std::string(to_string(e.code()))};
    }
  }
  const auto gold = read_trace_file(std::string(STAS_FIXTURE_DIR) + "/gold_small.stas");
  if (gold.size() != 2) return {false, "gold fixture"};
  return {true, "10000 records bit-exact, 5 corrupted fixtures raise their error codes"};
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path dir = fs::path(STAS_BINARY_DIR) / "acceptance_scratch" / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const nlohmann::json config{{"seed", 3},
                              {"capture", {{"blocks", {1, 2}}}},
                              {"model", {{"save_params", true}}},
                              {"prompts", {{{"id", "a"}, {"seed", 1}}, {{"id", "b"}, {"seed", 2}}}}};
  std::ofstream(dir / "config.json") << config.dump();
  std::ostringstream out, err;
  if (cli::run_cli({"generate", "--config", (dir / "config.json").string(), "--out", (dir / "seed").string()}, out,
                   err) != 0) {
    return {false, "seed run failed: " + err.str()};
  }
  const auto manifest = (dir / "seed" / "manifest.json").string();
  for (const char* run : {"run1", "run2"}) {
    if (cli::run_cli({"generate", "--config", manifest, "--jobs", "2", "--out", (dir / run).string()}, out, err) !=
        0) {
      return {false, std::string(run) + " failed: " + err.str()};
    }
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "run1")) {
    const auto name = entry.path().filename();
    if (name == "manifest.json") continue;
    if (read_bytes(entry.path()) != read_bytes(dir / "run2" / name)) return {false, name.string() + " differs"};
    ++files;
  }
  return {files == 3, std::to_string(files) + " output files byte-identical across two runs of one manifest"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"topology oracle equivalence", 1.0, topology_oracle},
      {"81-frame boundary indexing", 0.0, boundary_indexing_81},
      {"steering contract", 5.0, steering_contract},
      {"detail guidance equals scaling", 0.0, dg_equivalence},
      {"profiler reproduces the Wan2.1 MA table", 0.0, profiler_table_a1},
      {"streaming equals batched profiling", 0.0, streaming_equals_batched},
      {"oracle sampler convergence", 1.0, oracle_convergence},
      {"steering gate end to end", 30.0, gate_end_to_end},
      {"boundary-to-interior ratio decays", 10.0, fig2b_ratio},
      {"steering overhead below 1%", 0.0, overhead},
      {"trace round-trip and corruption errors", 0.0, trace_round_trip},
      {"generate is deterministic", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) {
      o.pass = false;
      o.detail += "; exceeded " + fmt("%.0f", c.time_limit_s) + " s";
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.name << "  [" << o.detail << "; " << fmt("%.3f", secs)
              << " s]" << std::endl;
    if (!o.pass) ++failed;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
