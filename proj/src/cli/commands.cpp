#include "stas/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "stas/cli/config.hpp"
#include "stas/consistency.hpp"
#include "stas/error.hpp"
#include "stas/presets.hpp"
#include "stas/profiler.hpp"
#include "stas/sampler.hpp"
#include "stas/trace_io.hpp"

namespace stas::cli {

namespace fs = std::filesystem;

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(jobs, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::size_t jobs_of(const nlohmann::json& config) { return config.value("jobs", std::size_t{1}); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

std::string write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
  return path.string();
}

std::string write_json(const fs::path& path, const nlohmann::json& j) { return write_text(path, j.dump(2) + "\n"); }

std::string padded(std::int64_t v, int width) {
  std::ostringstream os;
  if (v < 0) {
    os << 'm';
    v = -v;
  }
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

struct Model {
  std::unique_ptr<Denoiser> denoiser;
  std::string kind;
};

Model build_model(const nlohmann::json& config) {
  const auto topo = topology_from_config(config);
  const auto& m = config.at("model");
  const std::string kind = m.value("kind", std::string("toy"));
  if (kind == "oracle") {
    return {std::make_unique<OracleDenoiser>(topo, oracle_target(config, topo),
                                             m.value("conditioning_size", std::size_t{16})),
            kind};
  }
  if (kind != "toy") throw InvalidArgument("unknown model kind '" + kind + "' (toy|oracle)");
  if (m.contains("params_file") && !m.at("params_file").is_null()) {
    const auto records = read_raw_trace_file(m.at("params_file").get<std::string>());
    auto model = ToyDiT::from_records(records);
    if (model.topology() != topo) throw InvalidArgument("parameter checkpoint topology differs from config topology");
    return {std::make_unique<ToyDiT>(std::move(model)), kind};
  }
  return {std::make_unique<ToyDiT>(ToyDiT::init_params(toy_model_from_config(config))), kind};
}

RawRecord latent_record(const Matrix& latent, const TokenTopology& topo, const std::string& model_id,
                        const std::string& prompt_id, const SamplerConfig& sc) {
  return RawRecord{{{"kind", "latent"},
                    {"model_id", model_id},
                    {"prompt_id", prompt_id},
                    {"num_tokens", latent.rows()},
                    {"hidden_size", latent.cols()},
                    {"latent_frames", topo.latent_frames},
                    {"tokens_per_frame", topo.tokens_per_frame},
                    {"r_temp", topo.r_temp},
                    {"steps", sc.steps},
                    {"cfg_scale", sc.cfg_scale},
                    {"seed", sc.seed},
                    {"steered", sc.steering.has_value() && sc.steering->steps > 0}},
                   latent};
}

std::vector<std::size_t> capture_blocks(const nlohmann::json& config, const Denoiser& model) {
  auto blocks = config.at("capture").value("blocks", std::vector<std::size_t>{});
  for (std::size_t b : blocks) {
    if (b >= model.num_blocks()) throw InvalidArgument("capture block " + std::to_string(b) + " out of range");
  }
  return blocks;
}

}  // namespace

double latent_temporal_smoothness(const Matrix& latent, const TokenTopology& topo) {
  if (latent.rows() != topo.total_tokens()) throw ShapeMismatch("latent does not match topology");
  if (topo.latent_frames < 2) return 1.0;
  const std::size_t per_frame = topo.tokens_per_frame * latent.cols();
  const auto values = latent.values();
  double total = 0.0;
  for (std::size_t l = 0; l + 1 < topo.latent_frames; ++l) {
    const auto a = values.subspan(l * per_frame, per_frame);
    const auto b = values.subspan((l + 1) * per_frame, per_frame);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < per_frame; ++i) {
      dot += static_cast<double>(a[i]) * b[i];
      na += static_cast<double>(a[i]) * a[i];
      nb += static_cast<double>(b[i]) * b[i];
    }
    total += (na > 0.0 && nb > 0.0) ? dot / std::sqrt(na * nb) : 0.0;
  }
  return total / static_cast<double>(topo.latent_frames - 1);
}

CommandResult cmd_generate(const CommandContext& ctx) {
  const auto& config = ctx.config;
  const auto topo = topology_from_config(config);
  const Model model = build_model(config);
  const SamplerConfig sc = sampler_from_config(config, topo);
  const auto prompts = prompts_from_config(config, model.denoiser->conditioning_size());
  const auto blocks = capture_blocks(config, *model.denoiser);
  ensure_dir(ctx.out_dir);

  std::vector<SampleResult> results(prompts.size());
  parallel_for(prompts.size(), jobs_of(config), [&](std::size_t i) {
    SampleOptions opts;
    opts.capture_blocks = blocks;
    opts.prompt_id = prompts[i].id;
    results[i] = sample(*model.denoiser, sc, prompts[i].cond, opts);
  });

  CommandResult result;
  std::vector<RawRecord> latents;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    latents.push_back(latent_record(results[i].final_latent, topo, model.denoiser->model_id(), prompts[i].id, sc));
  }
  const fs::path latent_path = ctx.out_dir / "latent.stas";
  write_raw_trace_file(latent_path.string(), latents);
  result.outputs.push_back(latent_path.string());

  if (!blocks.empty()) {
    std::vector<TraceRecord> traces;
    for (auto& r : results) {
      for (auto& t : r.captured_traces) traces.push_back(std::move(t));
    }
    const fs::path trace_path = ctx.out_dir / config.at("capture").value("file", std::string("traces.stas"));
    write_trace_file(trace_path.string(), traces);
    result.outputs.push_back(trace_path.string());
  }
  if (config.at("model").value("save_params", false)) {
    const auto* toy = dynamic_cast<const ToyDiT*>(model.denoiser.get());
    if (!toy) throw InvalidArgument("save_params is only available for the toy model");
    const fs::path params_path = ctx.out_dir / "params.stas";
    write_raw_trace_file(params_path.string(), toy->to_records());
    result.outputs.push_back(params_path.string());
  }

  if (model.kind == "oracle") {
    const auto target = oracle_target(config, topo);
    double worst = 0.0;
    for (const auto& r : results) {
      for (std::size_t i = 0; i < target.size(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(r.final_latent.values()[i]) - target.values()[i]));
      }
    }
    result.summary["max_abs_error_to_target"] = worst;
  }
  result.summary["prompts"] = prompts.size();
  result.summary["steered"] = sc.steering.has_value() && sc.steering->steps > 0;
  return result;
}

namespace {

struct BlockGeometry {
  std::uint64_t hidden_size = 0;
  std::uint64_t latent_frames = 0;
  std::uint64_t tokens_per_frame = 0;
  std::uint64_t r_temp = 0;
  bool operator==(const BlockGeometry&) const = default;
};

BlockGeometry geometry_of(const TraceMeta& m) { return {m.hidden_size, m.latent_frames, m.tokens_per_frame, m.r_temp}; }

struct ProfileState {
  std::map<ProfileKey, DimensionProfile> profiles;
  std::map<std::int64_t, BlockGeometry> geometry;
  std::size_t records = 0;

  void check_geometry(const TraceMeta& meta, const std::string& source) {
    const auto g = geometry_of(meta);
    auto [it, inserted] = geometry.emplace(meta.block, g);
    if (!inserted && !(it->second == g)) {
      throw InconsistentMetadata("record in '" + source + "' disagrees with earlier records of block " +
                                 std::to_string(meta.block) + " on hidden size or topology");
    }
  }

  void add(const TraceRecord& rec, const std::string& source) {
    check_geometry(rec.meta, source);
    const ProfileKey key{rec.meta.block, rec.meta.step_index};
    auto it = profiles.find(key);
    if (it == profiles.end()) it = profiles.emplace(key, DimensionProfile(rec.meta.hidden_size)).first;
    it->second.accumulate(rec.data);
    ++records;
  }

  void merge_from(const ProfileState& other) {
    for (const auto& [block, g] : other.geometry) {
      auto [it, inserted] = geometry.emplace(block, g);
      if (!inserted && !(it->second == g)) {
        throw InconsistentMetadata("inputs disagree on hidden size or topology of block " + std::to_string(block));
      }
    }
    for (const auto& [key, p] : other.profiles) {
      auto it = profiles.find(key);
      if (it == profiles.end()) {
        profiles.emplace(key, p);
      } else {
        it->second.merge_from(p);
      }
    }
    records += other.records;
  }
};

using RecordSource = std::function<void(const std::function<void(const TraceRecord&)>&)>;

std::vector<RecordSource> record_sources(const CommandContext& ctx) {
  std::vector<RecordSource> sources;
  for (const auto& path : ctx.inputs) {
    if (fs::path(path).extension() == ".json") continue;
    sources.push_back([path](const std::function<void(const TraceRecord&)>& sink) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw TraceError(TraceErrorCode::io, "cannot open '" + path + "' for reading");
      TraceReader reader(in);
      while (auto rec = reader.next()) sink(*rec);
    });
  }
  return sources;
}

// In-memory traces from a toy sampling run, used when no input files are given.
std::vector<TraceRecord> toy_run_traces(const nlohmann::json& config) {
  const auto topo = topology_from_config(config);
  const Model model = build_model(config);
  if (model.kind != "toy") throw InvalidArgument("profiling a model run needs the toy model");
  auto blocks = capture_blocks(config, *model.denoiser);
  if (blocks.empty()) {
    for (const auto& b : config.at("model").value("planted", nlohmann::json::array())) {
      blocks.push_back(b.at("block").get<std::size_t>());
    }
    std::sort(blocks.begin(), blocks.end());
    blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  }
  if (blocks.empty()) throw InvalidArgument("no capture blocks configured and no planted blocks to default to");
  const SamplerConfig sc = sampler_from_config(config, topo);
  std::vector<TraceRecord> traces;
  for (const auto& prompt : prompts_from_config(config, model.denoiser->conditioning_size())) {
    SampleOptions opts;
    opts.capture_blocks = blocks;
    opts.prompt_id = prompt.id;
    auto r = sample(*model.denoiser, sc, prompt.cond, opts);
    for (auto& t : r.captured_traces) traces.push_back(std::move(t));
  }
  return traces;
}

}  // namespace

CommandResult cmd_profile(const CommandContext& ctx) {
  const auto& config = ctx.config;
  const auto& pc = config.at("profile");
  const double threshold = pc.value("ma_threshold", kDefaultMaThreshold);
  const double sigma_mult = pc.value("sigma_mult", kDefaultSigmaMult);
  const double p = pc.value("p", 8.0);
  const auto fixed_dims = pc.value("dims", std::vector<std::size_t>{});

  std::vector<RecordSource> sources = record_sources(ctx);
  std::vector<std::string> profile_jsons;
  for (const auto& path : ctx.inputs) {
    if (fs::path(path).extension() == ".json") profile_jsons.push_back(path);
  }
  if (ctx.inputs.empty()) {
    auto traces = std::make_shared<std::vector<TraceRecord>>(toy_run_traces(config));
    sources.push_back([traces](const std::function<void(const TraceRecord&)>& sink) {
      for (const auto& t : *traces) sink(t);
    });
  }

  // Pass 1: per-(block, step) dimension profiles. Sequential accumulation keeps
  // sums in input order; with --jobs > 1 each source is a shard merged in order.
  ProfileState state;
  if (jobs_of(config) <= 1) {
    for (std::size_t i = 0; i < sources.size(); ++i) {
      sources[i]([&](const TraceRecord& r) { state.add(r, "input " + std::to_string(i)); });
    }
  } else {
    std::vector<ProfileState> shards(sources.size());
    parallel_for(sources.size(), jobs_of(config), [&](std::size_t i) {
      sources[i]([&](const TraceRecord& r) { shards[i].add(r, "input " + std::to_string(i)); });
    });
    for (const auto& s : shards) state.merge_from(s);
  }
  for (const auto& path : profile_jsons) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("profile snapshot '" + path + "' is not valid JSON: " + e.what());
    }
    const auto items = j.is_array() ? j : nlohmann::json::array({j});
    for (const auto& item : items) {
      if (!item.contains("block") || !item.contains("step_index")) {
        throw InvalidArgument("profile snapshot in '" + path + "' lacks block/step_index");
      }
      ProfileState one;
      const ProfileKey key{item.at("block").get<std::int64_t>(), item.at("step_index").get<std::int64_t>()};
      one.profiles.emplace(key, DimensionProfile::from_json(item));
      state.merge_from(one);
    }
  }
  if (state.profiles.empty()) throw EmptyProfile("no activation records found in the inputs");

  ensure_dir(ctx.out_dir);
  CommandResult result;
  nlohmann::json reports = nlohmann::json::array();
  std::map<std::int64_t, std::set<std::size_t>> ma_dims_by_block;
  for (const auto& [key, profile] : state.profiles) {
    const MAReport report = classify(profile, threshold, sigma_mult);
    const auto ma_dims = report.dims_of(DimClass::ma);
    if (!ma_dims.empty()) ma_dims_by_block[key.block].insert(ma_dims.begin(), ma_dims.end());
    reports.push_back({{"block", key.block}, {"step_index", key.step_index}, {"snapshots", profile.snapshots()},
                       {"report", report.to_json()}});
    std::ostringstream csv;
    write_ma_csv(csv, report);
    result.outputs.push_back(
        write_text(ctx.out_dir / ("ma_b" + padded(key.block, 3) + "_s" + padded(key.step_index, 3) + ".csv"), csv.str()));
  }
  result.outputs.push_back(write_json(ctx.out_dir / "ma_report.json", {{"reports", reports}}));

  // Pass 2: positional profiles per block over the chosen dims.
  std::map<std::int64_t, std::vector<std::size_t>> dims_by_block;
  for (const auto& [block, g] : state.geometry) {
    std::vector<std::size_t> dims = fixed_dims;
    if (dims.empty()) {
      if (auto it = ma_dims_by_block.find(block); it != ma_dims_by_block.end()) dims.assign(it->second.begin(), it->second.end());
    }
    dims.erase(std::remove_if(dims.begin(), dims.end(), [&](std::size_t d) { return d >= g.hidden_size; }),
               dims.end());
    if (!dims.empty()) dims_by_block[block] = std::move(dims);
  }
  std::map<std::int64_t, PositionalProfile> positional;
  for (const auto& [block, dims] : dims_by_block) {
    const auto& g = state.geometry.at(block);
    positional.emplace(block, PositionalProfile(topology_from_latent(g.latent_frames, g.tokens_per_frame, g.r_temp), p, dims));
  }
  if (!positional.empty()) {
    for (auto& source : sources) {
      source([&](const TraceRecord& r) {
        auto it = positional.find(r.meta.block);
        if (it != positional.end()) it->second.accumulate(r.data, r.meta.step_index);
      });
    }
  }
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& [block, g] : state.geometry) {
    auto it = positional.find(block);
    if (it == positional.end()) {
      skipped.push_back(block);
      continue;
    }
    std::ostringstream csv;
    write_positional_csv(csv, it->second);
    const std::string stem = "positional_b" + padded(block, 3);
    result.outputs.push_back(write_text(ctx.out_dir / (stem + ".csv"), csv.str()));
    result.outputs.push_back(write_json(ctx.out_dir / (stem + ".json"), positional_to_json(it->second)));
  }

  nlohmann::json ma_summary = nlohmann::json::object();
  for (const auto& [block, dims] : ma_dims_by_block) {
    ma_summary[std::to_string(block)] = std::vector<std::size_t>(dims.begin(), dims.end());
  }
  result.summary = {{"records", state.records},
                    {"profiles", state.profiles.size()},
                    {"ma_dims_by_block", ma_summary},
                    {"positional_skipped_blocks", skipped}};
  return result;
}

namespace {

struct Variant {
  std::string dims_name;
  std::vector<std::size_t> dims;
  std::string tokens;
  std::size_t steps = 0;
  std::string rule;
  double p = 0.0;
  double alpha = 0.0;
  std::size_t layer = 0;
};

template <typename T>
std::vector<T> axis(const nlohmann::json& grid, const char* name) {
  if (!grid.contains(name)) throw InvalidArgument(std::string("ablation grid lacks axis '") + name + "'");
  const auto& a = grid.at(name);
  std::vector<T> values = a.is_array() ? a.get<std::vector<T>>() : std::vector<T>{a.get<T>()};
  if (values.empty()) throw InvalidArgument(std::string("ablation grid axis '") + name + "' is empty");
  return values;
}

}  // namespace

CommandResult cmd_ablate(const CommandContext& ctx) {
  const auto& config = ctx.config;
  const auto topo = topology_from_config(config);
  const Model model = build_model(config);
  if (model.kind != "toy") throw InvalidArgument("ablation runs on the toy model");
  const auto prompts = prompts_from_config(config, model.denoiser->conditioning_size());
  const auto& grid = config.at("ablate");

  std::vector<Variant> variants;
  try {
    const auto dim_sets = grid.at("dim_sets");
    for (const auto& dn : axis<std::string>(grid, "dims"))
      for (const auto& tk : axis<std::string>(grid, "tokens"))
        for (auto k : axis<std::size_t>(grid, "steps"))
          for (const auto& rule : axis<std::string>(grid, "rule"))
            for (double p : axis<double>(grid, "p"))
              for (double alpha : axis<double>(grid, "alpha"))
                for (auto layer : axis<std::size_t>(grid, "layer")) {
                  if (!dim_sets.contains(dn)) throw InvalidArgument("ablation dim set '" + dn + "' is not defined");
                  variants.push_back({dn, dim_sets.at(dn).get<std::vector<std::size_t>>(), tk, k, rule, p, alpha, layer});
                }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad ablation grid: ") + e.what());
  }
  if (variants.empty()) throw InvalidArgument("ablation grid is empty");

  SamplerConfig base = sampler_from_config(config, topo);
  base.steering.reset();
  const double omega = config.at("steering").value("omega", 0.5);

  struct Row {
    double smoothness = 0.0;
    std::size_t coverage = 0;
    double runtime_ms = 0.0;
  };
  const auto run = [&](const std::optional<SteeringConfig>& steering) {
    SamplerConfig sc = base;
    sc.steering = steering;
    Row row;
    if (steering) row.coverage = steering->tokens.size() * steering->dims.size();
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& prompt : prompts) {
      const auto r = sample(*model.denoiser, sc, prompt.cond);
      row.smoothness += latent_temporal_smoothness(r.final_latent, topo);
    }
    row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    row.smoothness /= static_cast<double>(prompts.size());
    return row;
  };

  // Build and validate every variant before running anything.
  std::vector<SteeringConfig> steering(variants.size());
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    SteeringConfig s;
    s.dims = v.dims;
    s.tokens = tokens_by_name(topo, v.tokens, v.p);
    s.rule = rule_by_name(v.rule, v.alpha, omega);
    s.steps = v.steps;
    s.layer = v.layer;
    if (s.steps > base.steps) throw InvalidArgument("ablation K exceeds the sampling step count");
    validate(s, model.denoiser->hidden_size(), topo.total_tokens(), model.denoiser->num_blocks());
    steering[i] = std::move(s);
  }

  const Row vanilla = run(std::nullopt);
  std::vector<Row> rows(variants.size());
  parallel_for(variants.size(), jobs_of(config), [&](std::size_t i) { rows[i] = run(steering[i]); });

  std::ostringstream csv;
  csv << std::setprecision(10);
  csv << "variant,dims,dim_indices,tokens,K,rule,p,alpha,layer,coverage,temporal_smoothness,runtime_ms,runtime_delta_ms\n";
  csv << "vanilla,-,-,-,-,-,-,-,-,0," << vanilla.smoothness << ',' << vanilla.runtime_ms << ",0\n";
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    std::string idx;
    for (std::size_t k = 0; k < v.dims.size(); ++k) idx += (k ? ";" : "") + std::to_string(v.dims[k]);
    csv << "v" << i << ',' << v.dims_name << ',' << idx << ',' << v.tokens << ',' << v.steps << ',' << v.rule << ','
        << v.p << ',' << v.alpha << ',' << v.layer << ',' << rows[i].coverage << ',' << rows[i].smoothness << ','
        << rows[i].runtime_ms << ',' << rows[i].runtime_ms - vanilla.runtime_ms << '\n';
  }
  ensure_dir(ctx.out_dir);
  CommandResult result;
  result.outputs.push_back(write_text(ctx.out_dir / "ablate.csv", csv.str()));
  result.summary = {{"variants", variants.size()}, {"vanilla_smoothness", vanilla.smoothness}};
  return result;
}

CommandResult cmd_consistency(const CommandContext& ctx) {
  if (ctx.inputs.empty()) throw InvalidArgument("consistency needs at least one embedding file");
  const auto& cc = ctx.config.value("consistency", nlohmann::json::object());
  std::optional<std::size_t> flag_r_temp;
  if (cc.contains("r_temp") && !cc.at("r_temp").is_null()) flag_r_temp = cc.at("r_temp").get<std::size_t>();

  std::vector<FrameEmbeddingSet> videos;
  for (const auto& path : ctx.inputs) {
    for (const auto& rec : read_raw_trace_file(path)) videos.push_back(embeddings_from_record(rec));
  }
  if (videos.empty()) throw InvalidArgument("no frame_embeddings records found in the inputs");

  std::vector<ConsistencyReport> reports(videos.size());
  std::vector<TokenTopology> topos(videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto r_temp = flag_r_temp ? flag_r_temp : videos[i].r_temp;
    if (!r_temp) {
      throw MissingTopology("embedding set " + std::to_string(i) + " ('" + videos[i].video_id +
                            "') has no r_temp metadata; pass --r-temp");
    }
    topos[i] = build_topology(videos[i].frame_count(), *r_temp, 1);
  }
  parallel_for(videos.size(), jobs_of(ctx.config), [&](std::size_t i) {
    reports[i] = partition_report(pairwise_similarity(videos[i]), topos[i]);
  });

  ensure_dir(ctx.out_dir);
  CommandResult result;
  nlohmann::json per_video = nlohmann::json::array();
  for (std::size_t i = 0; i < videos.size(); ++i) {
    std::string stem = "consistency_" + padded(static_cast<std::int64_t>(i), 3);
    std::ostringstream csv;
    write_consistency_csv(csv, reports[i]);
    result.outputs.push_back(write_text(ctx.out_dir / (stem + ".csv"), csv.str()));
    nlohmann::json summary = reports[i].summary_json();
    summary["video_id"] = videos[i].video_id;
    summary["source_label"] = videos[i].source_label;
    summary["r_temp"] = topos[i].r_temp;
    result.outputs.push_back(write_json(ctx.out_dir / (stem + ".json"), summary));
    per_video.push_back(std::move(summary));
  }
  nlohmann::json pooled = pool_reports(reports).to_json();
  result.outputs.push_back(write_json(ctx.out_dir / "pooled_summary.json", pooled));
  result.summary = {{"videos", videos.size()}, {"per_video", per_video}, {"pooled", pooled}};
  return result;
}

nlohmann::json cmd_info(const nlohmann::json& config) {
  nlohmann::json presets = nlohmann::json::array();
  for (const auto& p : model_presets()) {
    presets.push_back({{"name", std::string(p.name)},
                       {"num_blocks", p.num_blocks},
                       {"hidden_size", p.hidden_size},
                       {"ma_dim", p.ma_dim},
                       {"layer", p.layer},
                       {"alpha", p.alpha},
                       {"p", p.p},
                       {"K", p.steps_k},
                       {"cfg_scale", p.cfg_scale}});
  }
  return {{"tool_version", kToolVersion},
          {"trace_format", {{"magic", std::string(kTraceMagic)}, {"version", kTraceVersion}}},
          {"commands", {"profile", "generate", "ablate", "consistency", "info"}},
          {"presets", presets},
          {"resolved_config", config}};
}

void write_manifest(const CommandContext& ctx, const CommandResult& result, double seconds) {
  nlohmann::json manifest{{"command", ctx.command},
                          {"tool_version", kToolVersion},
                          {"seed", ctx.config.value("seed", std::uint64_t{0})},
                          {"resolved_config", ctx.config},
                          {"inputs", ctx.inputs},
                          {"outputs", result.outputs},
                          {"summary", result.summary},
                          {"wall_clock_seconds", seconds}};
  ensure_dir(ctx.out_dir);
  write_json(ctx.out_dir / "manifest.json", manifest);
}

}  // namespace stas::cli
