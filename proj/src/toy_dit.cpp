#include "stas/denoiser.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "stas/error.hpp"
#include "stas/random.hpp"

namespace stas {

namespace {

Matrix random_matrix(GaussianSource& g, std::size_t rows, std::size_t cols, float scale) {
  Matrix m(rows, cols);
  for (float& v : m.values()) v = g.next() * scale;
  return m;
}

// y = x W (+ b)
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto out = y.row(i);
    if (!b.empty()) std::copy(b.values().begin(), b.values().end(), out.begin());
    const auto in = x.row(i);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const float a = in[k];
      const auto wk = w.row(k);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += a * wk[j];
    }
  }
  return y;
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta) {
  Matrix y = normalize_rows(x);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = r[j] * gamma(0, j) + beta(0, j);
  }
  return y;
}

float gelu(float x) {
  constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
}

// Columns [h*dh, (h+1)*dh) of m.
Matrix head_slice(const Matrix& m, std::size_t h, std::size_t dh) {
  Matrix out(m.rows(), dh);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto src = m.row(i).subspan(h * dh, dh);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix softmax_scores(const Matrix& q, const Matrix& k) {
  const std::size_t n = q.rows();
  const float scale = 1.0f / std::sqrt(static_cast<float>(q.cols()));
  Matrix w(n, k.rows());
  for (std::size_t i = 0; i < n; ++i) {
    auto row = w.row(i);
    const auto qi = q.row(i);
    float mx = -INFINITY;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      const auto kj = k.row(j);
      float s = 0.0f;
      for (std::size_t c = 0; c < qi.size(); ++c) s += qi[c] * kj[c];
      row[j] = s * scale;
      mx = std::max(mx, row[j]);
    }
    double total = 0.0;
    for (float& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    const float inv = static_cast<float>(1.0 / total);
    for (float& v : row) v *= inv;
  }
  return w;
}

Matrix param_row(std::size_t n, float fill) { return Matrix(1, n, fill); }

}  // namespace

Matrix normalize_rows(const Matrix& x, float eps) {
  Matrix y(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto out = y.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = static_cast<float>((in[j] - mean) * inv);
  }
  return y;
}

std::vector<float> sigma_features(double sigma, std::size_t count) {
  std::vector<float> f(count);
  const std::size_t half = count / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    f[k] = static_cast<float>(std::sin(1.0 * sigma * freq));
    f[half + k] = static_cast<float>(std::cos(1.0 * sigma * freq));
  }
  return f;
}

void validate(const ToyDiTConfig& c) {
  if (c.num_blocks < 1 || c.hidden_size < 1 || c.num_heads < 1 || c.mlp_ratio < 1 || c.latent_channels < 1 ||
      c.conditioning_size < 1) {
    throw InvalidArgument("toy DiT counts must all be >= 1");
  }
  if (c.hidden_size % c.num_heads != 0) throw InvalidArgument("hidden_size must be divisible by num_heads");
  for (const auto& bias : c.planted) {
    if (bias.block >= c.num_blocks) throw InvalidArgument("planted bias block out of range");
    for (std::size_t d : bias.dims) {
      if (d >= c.hidden_size) throw InvalidArgument("planted bias dim " + std::to_string(d) + " out of range");
    }
    const auto& m = bias.magnitudes;
    if (!(m[0] > m[1] && m[1] > m[2] && m[2] >= 0.0f)) {
      throw InvalidArgument("planted magnitudes must satisfy c_first > c_boundary > c_interior >= 0");
    }
    boundary_count(c.topology.tokens_per_frame, bias.p);
  }
}

nlohmann::json to_json(const ToyDiTConfig& c) {
  nlohmann::json planted = nlohmann::json::array();
  for (const auto& b : c.planted) {
    planted.push_back({{"block", b.block},
                       {"dims", b.dims},
                       {"magnitudes", b.magnitudes},
                       {"p", b.p},
                       {"decay", b.decay == BiasDecay::constant ? "constant" : "proportional_to_sigma"}});
  }
  return {{"num_blocks", c.num_blocks},
          {"hidden_size", c.hidden_size},
          {"num_heads", c.num_heads},
          {"mlp_ratio", c.mlp_ratio},
          {"latent_channels", c.latent_channels},
          {"conditioning_size", c.conditioning_size},
          {"seed", c.seed},
          {"topology",
           {{"pixel_frames", c.topology.pixel_frames},
            {"r_temp", c.topology.r_temp},
            {"tokens_per_frame", c.topology.tokens_per_frame}}},
          {"planted", std::move(planted)}};
}

ToyDiTConfig toy_config_from_json(const nlohmann::json& j) {
  try {
    ToyDiTConfig c;
    c.num_blocks = j.value("num_blocks", c.num_blocks);
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.conditioning_size = j.value("conditioning_size", c.conditioning_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("topology")) {
      const auto& t = j.at("topology");
      c.topology = build_topology(t.at("pixel_frames").get<std::size_t>(), t.at("r_temp").get<std::size_t>(),
                                  t.at("tokens_per_frame").get<std::size_t>());
    }
    for (const auto& b : j.value("planted", nlohmann::json::array())) {
      PlantedMABias bias;
      bias.block = b.at("block").get<std::size_t>();
      bias.dims = b.at("dims").get<std::vector<std::size_t>>();
      bias.magnitudes = b.at("magnitudes").get<std::array<float, 3>>();
      bias.p = b.value("p", bias.p);
      const auto decay = b.value("decay", std::string("constant"));
      if (decay == "constant") {
        bias.decay = BiasDecay::constant;
      } else if (decay == "proportional_to_sigma") {
        bias.decay = BiasDecay::proportional_to_sigma;
      } else {
        throw InvalidArgument("unknown planted decay '" + decay + "'");
      }
      c.planted.push_back(std::move(bias));
    }
    validate(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed toy model config: ") + e.what());
  }
}

ToyDiT::ToyDiT(ToyDiTConfig config) : config_(std::move(config)) {
  validate(config_);
  for (const auto& bias : config_.planted) planted_groups_.push_back(token_groups(config_.topology, bias.p));
}

template <typename Fn>
void ToyDiT::for_each_param(Fn&& fn) {
  fn("in_proj.w", in_proj_.w);
  fn("in_proj.b", in_proj_.b);
  fn("pos_emb", pos_emb_);
  fn("sigma_proj.w", sigma_proj_.w);
  fn("sigma_proj.b", sigma_proj_.b);
  fn("cond_proj.w", cond_proj_.w);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto& blk = blocks_[b];
    const std::string p = "blocks." + std::to_string(b) + ".";
    fn(p + "ln1.gamma", blk.ln1.gamma);
    fn(p + "ln1.beta", blk.ln1.beta);
    fn(p + "attn.q.w", blk.q.w);
    fn(p + "attn.k.w", blk.k.w);
    fn(p + "attn.v.w", blk.v.w);
    fn(p + "attn.o.w", blk.o.w);
    fn(p + "attn.o.b", blk.o.b);
    fn(p + "ln2.gamma", blk.ln2.gamma);
    fn(p + "ln2.beta", blk.ln2.beta);
    fn(p + "mlp.fc1.w", blk.fc1.w);
    fn(p + "mlp.fc1.b", blk.fc1.b);
    fn(p + "mlp.fc2.w", blk.fc2.w);
    fn(p + "mlp.fc2.b", blk.fc2.b);
  }
  fn("final_ln.gamma", final_ln_.gamma);
  fn("final_ln.beta", final_ln_.beta);
  fn("out_proj.w", out_proj_.w);
  fn("out_proj.b", out_proj_.b);
}

template <typename Fn>
void ToyDiT::for_each_param(Fn&& fn) const {
  const_cast<ToyDiT*>(this)->for_each_param(
      [&fn](const std::string& name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
}

ToyDiT ToyDiT::init_params(const ToyDiTConfig& config) {
  ToyDiT model(config);
  const auto& c = model.config_;
  const std::size_t h = c.hidden_size;
  const std::size_t mlp = h * c.mlp_ratio;
  const auto fan = [](std::size_t in) { return 1.0f / std::sqrt(static_cast<float>(in)); };
  GaussianSource g(c.seed);

  model.in_proj_ = {random_matrix(g, c.latent_channels, h, fan(c.latent_channels)), param_row(h, 0.0f)};
  model.pos_emb_ = random_matrix(g, c.topology.total_tokens(), h, 0.5f);
  model.sigma_proj_ = {random_matrix(g, kSigmaFeatures, h, fan(kSigmaFeatures)), param_row(h, 0.0f)};
  model.cond_proj_ = {random_matrix(g, c.conditioning_size, h, fan(c.conditioning_size)), Matrix{}};
  model.blocks_.resize(c.num_blocks);
  for (auto& blk : model.blocks_) {
    blk.ln1 = {param_row(h, 1.0f), param_row(h, 0.0f)};
    blk.q = {random_matrix(g, h, h, fan(h)), Matrix{}};
    blk.k = {random_matrix(g, h, h, fan(h)), Matrix{}};
    blk.v = {random_matrix(g, h, h, fan(h)), Matrix{}};
    blk.o = {random_matrix(g, h, h, fan(h)), param_row(h, 0.0f)};
    blk.ln2 = {param_row(h, 1.0f), param_row(h, 0.0f)};
    blk.fc1 = {random_matrix(g, h, mlp, fan(h)), param_row(mlp, 0.0f)};
    blk.fc2 = {random_matrix(g, mlp, h, fan(mlp)), param_row(h, 0.0f)};
  }
  model.final_ln_ = {param_row(h, 1.0f), param_row(h, 0.0f)};
  model.out_proj_ = {random_matrix(g, h, c.latent_channels, fan(h)), param_row(c.latent_channels, 0.0f)};
  return model;
}

Matrix ToyDiT::embed(const LatentTensor& z, double sigma, std::span<const float> cond) const {
  const auto& c = config_;
  if (z.rows() != c.topology.total_tokens() || z.cols() != c.latent_channels) {
    throw ShapeMismatch("latent " + shape_string(z) + " does not match topology [" +
                        std::to_string(c.topology.total_tokens()) + " x " + std::to_string(c.latent_channels) + "]");
  }
  if (!(sigma > 0.0 && sigma <= 1.0)) throw InvalidArgument("sigma must lie in (0, 1], got " + std::to_string(sigma));
  if (cond.size() != c.conditioning_size) {
    throw ShapeMismatch("conditioning vector has " + std::to_string(cond.size()) + " entries, expected " +
                        std::to_string(c.conditioning_size));
  }
  Matrix x = linear(z, in_proj_.w, in_proj_.b);
  const auto feats = sigma_features(sigma);
  const Matrix t = linear(Matrix(1, feats.size(), feats), sigma_proj_.w, sigma_proj_.b);
  const Matrix cv = linear(Matrix(1, cond.size(), std::vector<float>(cond.begin(), cond.end())), cond_proj_.w,
                           cond_proj_.b);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += pos_emb_(i, j) + t(0, j) + cv(0, j);
  }
  return x;
}

std::vector<Matrix> ToyDiT::attention_weights(std::size_t b, const Matrix& x) const {
  const auto& blk = blocks_.at(b);
  const Matrix hn = layer_norm(x, blk.ln1.gamma, blk.ln1.beta);
  const Matrix q = linear(hn, blk.q.w, blk.q.b);
  const Matrix k = linear(hn, blk.k.w, blk.k.b);
  const std::size_t dh = config_.hidden_size / config_.num_heads;
  std::vector<Matrix> out;
  for (std::size_t h = 0; h < config_.num_heads; ++h) {
    out.push_back(softmax_scores(head_slice(q, h, dh), head_slice(k, h, dh)));
  }
  return out;
}

void ToyDiT::run_block(std::size_t b, Matrix& x, double sigma) const {
  const auto& blk = blocks_.at(b);
  const std::size_t n = x.rows();
  const std::size_t dh = config_.hidden_size / config_.num_heads;

  const Matrix hn = layer_norm(x, blk.ln1.gamma, blk.ln1.beta);
  const Matrix q = linear(hn, blk.q.w, blk.q.b);
  const Matrix k = linear(hn, blk.k.w, blk.k.b);
  const Matrix v = linear(hn, blk.v.w, blk.v.b);
  Matrix mixed(n, config_.hidden_size);
  for (std::size_t h = 0; h < config_.num_heads; ++h) {
    const Matrix w = softmax_scores(head_slice(q, h, dh), head_slice(k, h, dh));
    for (std::size_t i = 0; i < n; ++i) {
      auto out = mixed.row(i).subspan(h * dh, dh);
      const auto wi = w.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        const auto vj = v.row(j).subspan(h * dh, dh);
        for (std::size_t c = 0; c < dh; ++c) out[c] += wi[j] * vj[c];
      }
    }
  }
  const Matrix attn = linear(mixed, blk.o.w, blk.o.b);
  for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] += attn.values()[i];

  const Matrix hn2 = layer_norm(x, blk.ln2.gamma, blk.ln2.beta);
  Matrix hidden = linear(hn2, blk.fc1.w, blk.fc1.b);
  for (float& a : hidden.values()) a = gelu(a);
  const Matrix mlp = linear(hidden, blk.fc2.w, blk.fc2.b);
  for (std::size_t i = 0; i < x.size(); ++i) x.values()[i] += mlp.values()[i];

  add_planted_bias(b, x, sigma);
}

void ToyDiT::add_planted_bias(std::size_t b, Matrix& x, double sigma) const {
  for (std::size_t k = 0; k < config_.planted.size(); ++k) {
    const auto& bias = config_.planted[k];
    if (bias.block != b) continue;
    const float scale = bias.decay == BiasDecay::proportional_to_sigma ? static_cast<float>(sigma) : 1.0f;
    const auto& groups = planted_groups_[k];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const float add = bias.magnitudes[static_cast<std::size_t>(groups[i])] * scale;
      // Pushed away from zero in the entry's own sign, so |x| grows by exactly `add`.
      for (std::size_t d : bias.dims) x(i, d) += x(i, d) < 0.0f ? -add : add;
    }
  }
}

LatentTensor ToyDiT::head(const Matrix& x) const {
  return linear(layer_norm(x, final_ln_.gamma, final_ln_.beta), out_proj_.w, out_proj_.b);
}

DenoiserOutput ToyDiT::forward(const LatentTensor& z, double sigma, std::span<const float> cond,
                               const ForwardOptions& options) const {
  if (options.hook && options.hook->block >= config_.num_blocks) {
    throw InvalidArgument("hook block " + std::to_string(options.hook->block) + " out of range");
  }
  for (std::size_t b : options.capture_blocks) {
    if (b >= config_.num_blocks) throw InvalidArgument("capture block " + std::to_string(b) + " out of range");
  }
  DenoiserOutput out;
  Matrix x = embed(z, sigma, cond);
  for (std::size_t b = 0; b < config_.num_blocks; ++b) {
    run_block(b, x, sigma);
    if (options.hook && options.hook->block == b) {
      if (options.capture_pre_hook) out.pre_hook = x;
      if (options.hook->fn) options.hook->fn(x);
    }
    if (std::find(options.capture_blocks.begin(), options.capture_blocks.end(), b) != options.capture_blocks.end()) {
      out.captured.emplace(b, x);
    }
  }
  out.velocity = head(x);
  return out;
}

std::uint64_t ToyDiT::checksum() const {
  std::uint64_t hash = 1469598103934665603ull;
  for_each_param([&hash](const std::string&, const Matrix& m) {
    for (float v : m.values()) {
      hash ^= std::bit_cast<std::uint32_t>(v);
      hash *= 1099511628211ull;
    }
  });
  return hash;
}

std::vector<RawRecord> ToyDiT::to_records() const {
  std::vector<RawRecord> out;
  out.push_back(RawRecord{{{"kind", "params"},
                           {"name", "__config__"},
                           {"num_tokens", 0},
                           {"hidden_size", 0},
                           {"config", to_json(config_)}},
                          Matrix{}});
  for_each_param([&out](const std::string& name, const Matrix& m) {
    out.push_back(RawRecord{
        {{"kind", "params"}, {"name", name}, {"num_tokens", m.rows()}, {"hidden_size", m.cols()}}, m});
  });
  return out;
}

ToyDiT ToyDiT::from_records(std::span<const RawRecord> records) {
  if (records.empty() || records.front().kind() != "params" ||
      records.front().meta.value("name", std::string{}) != "__config__") {
    throw InvalidArgument("parameter checkpoint must start with a __config__ params record");
  }
  ToyDiT model = init_params(toy_config_from_json(records.front().meta.at("config")));
  std::size_t next = 1;
  model.for_each_param([&](const std::string& name, Matrix& m) {
    if (next >= records.size()) throw InvalidArgument("checkpoint is missing parameter '" + name + "'");
    const auto& rec = records[next++];
    if (rec.kind() != "params" || rec.meta.value("name", std::string{}) != name) {
      throw InvalidArgument("checkpoint record " + std::to_string(next - 1) + " is not parameter '" + name + "'");
    }
    if (!rec.data.same_shape(m)) throw ShapeMismatch("checkpoint parameter '" + name + "' has wrong shape");
    m = rec.data;
  });
  if (next != records.size()) throw InvalidArgument("checkpoint has trailing records");
  return model;
}

}  // namespace stas
