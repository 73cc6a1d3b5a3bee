#include "stas/steering.hpp"

#include <cmath>
#include <sstream>

#include "stas/error.hpp"

namespace stas {

namespace {

void check_indices(const ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens) {
  for (std::size_t d : dims) {
    if (d >= acts.cols()) {
      throw InvalidArgument("steered dim " + std::to_string(d) + " out of range for hidden size " +
                            std::to_string(acts.cols()));
    }
  }
  if (tokens.bound() > acts.rows()) {
    throw InvalidArgument("steered token " + std::to_string(tokens.bound() - 1) + " out of range for " +
                          std::to_string(acts.rows()) + " tokens");
  }
}

// Max |x| down one column; rejects non-finite entries in the columns we touch.
float column_peak(const ActivationTensor& acts, std::size_t d) {
  float peak = 0.0f;
  for (std::size_t r = 0; r < acts.rows(); ++r) {
    const float v = acts(r, d);
    if (!std::isfinite(v)) {
      throw NonFiniteValue("non-finite activation at token " + std::to_string(r) + ", dim " + std::to_string(d));
    }
    peak = std::max(peak, std::fabs(v));
  }
  return peak;
}

void check_column_finite(const ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens) {
  for (std::size_t d : dims) {
    for (std::size_t i : tokens) {
      if (!std::isfinite(acts(i, d))) {
        throw NonFiniteValue("non-finite activation at token " + std::to_string(i) + ", dim " + std::to_string(d));
      }
    }
  }
}

}  // namespace

std::string rule_name(const SteeringRule& rule) {
  struct Visitor {
    std::string operator()(const GlobalMaxRule&) const { return "max"; }
    std::string operator()(const ScalingRule&) const { return "scaling"; }
    std::string operator()(const DisruptRule&) const { return "disrupt"; }
  };
  return std::visit(Visitor{}, rule);
}

void validate(const SteeringConfig& config, std::size_t hidden_size, std::size_t num_tokens, std::size_t num_blocks) {
  if (config.layer >= num_blocks) {
    throw InvalidArgument("steering layer " + std::to_string(config.layer) + " out of range for " +
                          std::to_string(num_blocks) + " blocks");
  }
  for (std::size_t d : config.dims) {
    if (d >= hidden_size) throw InvalidArgument("steering dim " + std::to_string(d) + " out of range");
  }
  if (config.tokens.bound() > num_tokens) throw InvalidArgument("steering token set exceeds token count");
  if (const auto* g = std::get_if<GlobalMaxRule>(&config.rule); g && !(g->alpha > 0.0 && std::isfinite(g->alpha))) {
    throw InvalidArgument("alpha must be positive and finite");
  }
  if (const auto* s = std::get_if<ScalingRule>(&config.rule); s && !(s->omega > -1.0 && std::isfinite(s->omega))) {
    throw InvalidArgument("omega must be finite and greater than -1");
  }
}

void apply_stas_inplace(ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                        double alpha) {
  if (!(alpha > 0.0 && std::isfinite(alpha))) throw InvalidArgument("alpha must be positive and finite");
  check_indices(acts, dims, tokens);
  if (tokens.empty()) return;
  // Peaks for every dim first so repeated dims see pre-steering values too.
  std::vector<float> peaks(dims.size());
  for (std::size_t k = 0; k < dims.size(); ++k) peaks[k] = column_peak(acts, dims[k]);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const std::size_t d = dims[k];
    for (std::size_t i : tokens) acts(i, d) = global_max_target(acts(i, d), peaks[k], alpha);
  }
}

void apply_scaling_inplace(ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                           double omega) {
  if (!(omega > -1.0 && std::isfinite(omega))) throw InvalidArgument("omega must be finite and greater than -1");
  check_indices(acts, dims, tokens);
  check_column_finite(acts, dims, tokens);
  const double factor = 1.0 + omega;
  for (std::size_t d : dims) {
    for (std::size_t i : tokens) acts(i, d) = static_cast<float>(static_cast<double>(acts(i, d)) * factor);
  }
}

void disrupt_inplace(ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens) {
  check_indices(acts, dims, tokens);
  check_column_finite(acts, dims, tokens);
  for (std::size_t d : dims) {
    for (std::size_t i : tokens) acts(i, d) = 0.0f;
  }
}

void apply_rule_inplace(ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                        const SteeringRule& rule) {
  struct Visitor {
    ActivationTensor& acts;
    std::span<const std::size_t> dims;
    const TokenSet& tokens;
    void operator()(const GlobalMaxRule& r) const { apply_stas_inplace(acts, dims, tokens, r.alpha); }
    void operator()(const ScalingRule& r) const { apply_scaling_inplace(acts, dims, tokens, r.omega); }
    void operator()(const DisruptRule&) const { disrupt_inplace(acts, dims, tokens); }
  };
  std::visit(Visitor{acts, dims, tokens}, rule);
}

ActivationTensor apply_stas(const ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                            double alpha) {
  ActivationTensor out = acts;
  apply_stas_inplace(out, dims, tokens, alpha);
  return out;
}

ActivationTensor apply_scaling(const ActivationTensor& acts, std::span<const std::size_t> dims,
                               const TokenSet& tokens, double omega) {
  ActivationTensor out = acts;
  apply_scaling_inplace(out, dims, tokens, omega);
  return out;
}

ActivationTensor disrupt(const ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens) {
  ActivationTensor out = acts;
  disrupt_inplace(out, dims, tokens);
  return out;
}

ActivationTensor apply_rule(const ActivationTensor& acts, std::span<const std::size_t> dims, const TokenSet& tokens,
                            const SteeringRule& rule) {
  ActivationTensor out = acts;
  apply_rule_inplace(out, dims, tokens, rule);
  return out;
}

Matrix dg_combine(const Matrix& full, const Matrix& degraded, double omega) {
  if (!full.same_shape(degraded)) {
    throw ShapeMismatch("dg_combine shapes differ: " + shape_string(full) + " vs " + shape_string(degraded));
  }
  Matrix out(full.rows(), full.cols());
  const auto f = full.values();
  const auto g = degraded.values();
  auto o = out.values();
  for (std::size_t k = 0; k < o.size(); ++k) {
    const double x = f[k];
    o[k] = static_cast<float>(x + omega * (x - static_cast<double>(g[k])));
  }
  return out;
}

}  // namespace stas
