#include "stas/presets.hpp"

#include <array>

namespace stas {

namespace {

constexpr std::array<ModelPreset, 3> kPresets{{
    {"wan2.1-1.3b", 30, 1536, 1188, 9, 2.5, 8.0, 20, 5.0},
    {"wan2.2-5b", 30, 3072, 1938, 9, 2.0, 12.0, 20, 5.0},
    {"cogvideox-5b", 42, 3072, 1982, 8, 1.2, 8.0, 20, 6.0},
}};

}  // namespace

std::span<const ModelPreset> model_presets() noexcept { return kPresets; }

std::optional<ModelPreset> find_preset(std::string_view name) noexcept {
  for (const auto& p : kPresets) {
    if (p.name == name) return p;
  }
  return std::nullopt;
}

}  // namespace stas
