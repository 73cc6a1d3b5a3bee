#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stas/tensor.hpp"
#include "stas/topology.hpp"
#include "stas/trace_io.hpp"

namespace stas {

// Transform applied in place to one block's output.
struct BlockHook {
  std::size_t block = 0;
  std::function<void(ActivationTensor&)> fn;
};

struct ForwardOptions {
  std::optional<BlockHook> hook;
  std::vector<std::size_t> capture_blocks;  // snapshots taken after bias and hook
  bool capture_pre_hook = false;            // also keep the hooked block's output before the hook ran
};

struct DenoiserOutput {
  LatentTensor velocity;
  std::map<std::size_t, ActivationTensor> captured;
  std::optional<ActivationTensor> pre_hook;
};

// D(z, sigma, c): predicts a velocity of the same shape as z.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::string model_id() const = 0;
  virtual std::size_t num_blocks() const = 0;
  virtual std::size_t hidden_size() const = 0;
  virtual std::size_t latent_channels() const = 0;
  virtual std::size_t conditioning_size() const = 0;
  virtual const TokenTopology& topology() const = 0;
  virtual DenoiserOutput forward(const LatentTensor& z, double sigma, std::span<const float> cond,
                                 const ForwardOptions& options = {}) const = 0;
};

// Exact velocity for the straight path z_sigma = sigma * z0 + (1 - sigma) * target.
LatentTensor oracle_forward(const LatentTensor& z, double sigma, const LatentTensor& target);

// Closed-form denoiser with no blocks; conditioning and hooks do not apply.
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(TokenTopology topo, LatentTensor target, std::size_t conditioning_size = 0);

  std::string model_id() const override { return "oracle"; }
  std::size_t num_blocks() const override { return 0; }
  std::size_t hidden_size() const override { return target_.cols(); }
  std::size_t latent_channels() const override { return target_.cols(); }
  std::size_t conditioning_size() const override { return conditioning_size_; }
  const TokenTopology& topology() const override { return topo_; }
  const LatentTensor& target() const noexcept { return target_; }
  DenoiserOutput forward(const LatentTensor& z, double sigma, std::span<const float> cond,
                         const ForwardOptions& options = {}) const override;

 private:
  TokenTopology topo_;
  LatentTensor target_;
  std::size_t conditioning_size_;
};

enum class BiasDecay { constant, proportional_to_sigma };

// Additive offset at one block's output that mimics a massive activation:
// c_first on first-frame tokens, c_boundary on B(p) \ F0, c_interior elsewhere.
// The offset carries the sign of the entry it lands on, so it adds exactly c to |x|.
struct PlantedMABias {
  std::size_t block = 0;
  std::vector<std::size_t> dims;
  std::array<float, 3> magnitudes{10.0f, 5.0f, 1.0f};  // first, boundary, interior
  double p = 8.0;
  BiasDecay decay = BiasDecay::constant;
};

struct ToyDiTConfig {
  std::size_t num_blocks = 6;
  std::size_t hidden_size = 64;
  std::size_t num_heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t latent_channels = 4;
  std::size_t conditioning_size = 16;
  TokenTopology topology = build_topology(9, 4, 16);
  std::uint64_t seed = 0;
  std::vector<PlantedMABias> planted;
};

void validate(const ToyDiTConfig& config);

nlohmann::json to_json(const ToyDiTConfig& config);
ToyDiTConfig toy_config_from_json(const nlohmann::json& j);

// Random-initialized spatiotemporal DiT: pre-norm full self-attention over all
// tokens plus a 2-layer GELU MLP per block, both residual.
class ToyDiT final : public Denoiser {
 public:
  static constexpr std::size_t kSigmaFeatures = 32;
  static constexpr float kNormEps = 1e-5f;

  // Deterministic in config.seed.
  static ToyDiT init_params(const ToyDiTConfig& config);

  std::string model_id() const override { return "toy-dit"; }
  std::size_t num_blocks() const override { return config_.num_blocks; }
  std::size_t hidden_size() const override { return config_.hidden_size; }
  std::size_t latent_channels() const override { return config_.latent_channels; }
  std::size_t conditioning_size() const override { return config_.conditioning_size; }
  const TokenTopology& topology() const override { return config_.topology; }
  const ToyDiTConfig& config() const noexcept { return config_; }

  DenoiserOutput forward(const LatentTensor& z, double sigma, std::span<const float> cond,
                         const ForwardOptions& options = {}) const override;

  // The stages of forward, exposed so a pass can be split around a block.
  Matrix embed(const LatentTensor& z, double sigma, std::span<const float> cond) const;
  // Block b on the residual stream, including any planted bias at b.
  void run_block(std::size_t b, Matrix& x, double sigma) const;
  LatentTensor head(const Matrix& x) const;

  // Row-softmax attention weights of one head for the block's normalized input.
  std::vector<Matrix> attention_weights(std::size_t b, const Matrix& x) const;

  std::uint64_t checksum() const;

  // Checkpoint as trace-framed records of kind "params" (see docs/trace-format.md).
  std::vector<RawRecord> to_records() const;
  static ToyDiT from_records(std::span<const RawRecord> records);

 private:
  struct Linear {
    Matrix w;  // [in x out]
    Matrix b;  // [1 x out], empty when bias-free
  };
  struct Norm {
    Matrix gamma;
    Matrix beta;
  };
  struct Block {
    Norm ln1;
    Linear q, k, v, o;
    Norm ln2;
    Linear fc1, fc2;
  };

  explicit ToyDiT(ToyDiTConfig config);
  template <typename Fn>
  void for_each_param(Fn&& fn);
  template <typename Fn>
  void for_each_param(Fn&& fn) const;

  void add_planted_bias(std::size_t b, Matrix& x, double sigma) const;

  ToyDiTConfig config_;
  Linear in_proj_;
  Matrix pos_emb_;
  Linear sigma_proj_;
  Linear cond_proj_;
  std::vector<Block> blocks_;
  Norm final_ln_;
  Linear out_proj_;
  std::vector<std::vector<TokenGroup>> planted_groups_;
};

// Normalizes each row to zero mean and unit variance (no affine).
Matrix normalize_rows(const Matrix& x, float eps = ToyDiT::kNormEps);

// Sinusoidal noise-level features.
std::vector<float> sigma_features(double sigma, std::size_t count = ToyDiT::kSigmaFeatures);

}  // namespace stas
