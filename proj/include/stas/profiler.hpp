#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "stas/tensor.hpp"
#include "stas/topology.hpp"

namespace stas {

// Profiles are keyed per (block, step); aggregating across steps is an explicit merge.
struct ProfileKey {
  std::int64_t block = 0;
  std::int64_t step_index = 0;
  auto operator<=>(const ProfileKey&) const = default;
};

// Streaming per-dimension statistics of |activation|: running max over every
// token of every accumulated snapshot, plus running sums for the mean.
class DimensionProfile {
 public:
  DimensionProfile() = default;
  explicit DimensionProfile(std::size_t hidden_size);

  // Folds one snapshot in; the snapshot is only read.
  void accumulate(const ActivationTensor& snapshot);
  // Elementwise max of peaks, sum of sums and counts. Associative and commutative.
  void merge_from(const DimensionProfile& other);

  std::size_t hidden_size() const noexcept { return peaks_.size(); }
  std::uint64_t snapshots() const noexcept { return snapshots_; }
  std::uint64_t token_count() const noexcept { return tokens_; }
  bool empty() const noexcept { return snapshots_ == 0; }
  std::span<const float> peaks() const noexcept { return peaks_; }
  std::span<const double> abs_sums() const noexcept { return sums_; }
  double mean_abs(std::size_t dim) const noexcept;

  // Throws when the arrays disagree in length or hold negative/non-finite values.
  static DimensionProfile from_stats(std::vector<float> peaks, std::vector<double> abs_sums,
                                     std::uint64_t token_count, std::uint64_t snapshots);

  // Schema: {"kind": "dimension_profile", hidden_size, snapshots, token_count, max: [...], sum: [...]}
  nlohmann::json to_json() const;
  static DimensionProfile from_json(const nlohmann::json& j);

  friend bool operator==(const DimensionProfile&, const DimensionProfile&) = default;

 private:
  std::vector<float> peaks_;
  std::vector<double> sums_;
  std::uint64_t tokens_ = 0;
  std::uint64_t snapshots_ = 0;
};

DimensionProfile accumulate_dim(DimensionProfile profile, const ActivationTensor& snapshot);
DimensionProfile merge(const DimensionProfile& a, const DimensionProfile& b);

// Single pass over all snapshots at once (column-major sweep over the
// concatenated rows). Used as the batched reference for the streaming path.
DimensionProfile profile_batched(std::span<const ActivationTensor> snapshots);

enum class DimClass { ma, weak_ma, normal };

std::string_view to_string(DimClass c) noexcept;

struct DimensionEntry {
  std::size_t dim = 0;
  float peak = 0.0f;
  double peak_to_mean = 0.0;
  std::optional<double> peak_to_median;
  DimClass cls = DimClass::normal;
};

struct MAReport {
  std::vector<DimensionEntry> entries;
  double reference_mean = 0.0;  // mean over dims of per-dim peaks
  double median_peak = 0.0;
  double mu = 0.0;               // of the peak distribution (equals reference_mean)
  double sigma = 0.0;            // population std of the peak distribution
  double ma_threshold = 50.0;
  double sigma_mult = 3.0;

  std::vector<std::size_t> dims_of(DimClass c) const;
  nlohmann::json to_json() const;
};

inline constexpr double kDefaultMaThreshold = 50.0;
inline constexpr double kDefaultSigmaMult = 3.0;

// Candidates are dims whose peak exceeds mu + sigma_mult * sigma; a candidate is
// MA when peak / reference_mean > ma_threshold and weak-MA otherwise.
MAReport classify(const DimensionProfile& profile, double ma_threshold = kDefaultMaThreshold,
                  double sigma_mult = kDefaultSigmaMult);

// Columns: dim, peak, peak_to_mean, peak_to_median, class
void write_ma_csv(std::ostream& out, const MAReport& report);

// Running mean of |activation| over the selected dims, split by token group and step.
class PositionalProfile {
 public:
  struct GroupStats {
    std::array<double, 3> sum{};
    std::array<std::uint64_t, 3> count{};
    std::optional<double> mean(TokenGroup g) const;
  };

  PositionalProfile(const TokenTopology& topo, double p, std::vector<std::size_t> dims);

  void accumulate(const ActivationTensor& snapshot, std::int64_t step_index);
  void merge_from(const PositionalProfile& other);

  const TokenTopology& topology() const noexcept { return topo_; }
  double boundary_percent() const noexcept { return p_; }
  std::span<const std::size_t> dims() const noexcept { return dims_; }
  std::span<const TokenGroup> groups() const noexcept { return groups_; }
  const std::map<std::int64_t, GroupStats>& steps() const noexcept { return steps_; }

 private:
  TokenTopology topo_;
  double p_;
  std::vector<std::size_t> dims_;
  std::vector<TokenGroup> groups_;
  std::map<std::int64_t, GroupStats> steps_;
};

PositionalProfile accumulate_positional(PositionalProfile profile, const ActivationTensor& snapshot,
                                        std::int64_t step_index);

struct RatioPoint {
  std::int64_t step_index = 0;
  std::optional<double> ratio;  // absent when the interior mean is zero or a group is empty
};

std::vector<RatioPoint> boundary_interior_ratio(const PositionalProfile& profile);

// Columns: step, first_mean, boundary_mean, interior_mean, ratio
void write_positional_csv(std::ostream& out, const PositionalProfile& profile);
nlohmann::json positional_to_json(const PositionalProfile& profile);

}  // namespace stas
