#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

namespace stas {

// Published backbone settings: architecture, MA dimension, steering layer, and
// steering hyperparameters.
struct ModelPreset {
  std::string_view name;
  std::size_t num_blocks;
  std::size_t hidden_size;
  std::size_t ma_dim;
  std::size_t layer;
  double alpha;
  double p;
  std::size_t steps_k;
  double cfg_scale;
};

std::span<const ModelPreset> model_presets() noexcept;
std::optional<ModelPreset> find_preset(std::string_view name) noexcept;

}  // namespace stas
