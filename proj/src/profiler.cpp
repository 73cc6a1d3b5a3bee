#include "stas/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "stas/error.hpp"

namespace stas {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

DimensionProfile::DimensionProfile(std::size_t hidden_size) : peaks_(hidden_size, 0.0f), sums_(hidden_size, 0.0) {
  if (hidden_size == 0) throw InvalidArgument("hidden_size must be >= 1");
}

void DimensionProfile::accumulate(const ActivationTensor& snapshot) {
  if (snapshot.cols() != peaks_.size()) {
    throw ShapeMismatch("snapshot has " + std::to_string(snapshot.cols()) + " dims, profile has " +
                        std::to_string(peaks_.size()));
  }
  for (std::size_t r = 0; r < snapshot.rows(); ++r) {
    const auto row = snapshot.row(r);
    for (std::size_t d = 0; d < row.size(); ++d) {
      const float a = std::fabs(row[d]);
      if (!std::isfinite(a)) throw NonFiniteValue("non-finite activation at token " + std::to_string(r));
      peaks_[d] = std::max(peaks_[d], a);
      sums_[d] += a;
    }
  }
  tokens_ += snapshot.rows();
  ++snapshots_;
}

void DimensionProfile::merge_from(const DimensionProfile& other) {
  if (other.hidden_size() != hidden_size()) {
    throw ShapeMismatch("cannot merge profiles with hidden sizes " + std::to_string(hidden_size()) + " and " +
                        std::to_string(other.hidden_size()));
  }
  for (std::size_t d = 0; d < peaks_.size(); ++d) {
    peaks_[d] = std::max(peaks_[d], other.peaks_[d]);
    sums_[d] += other.sums_[d];
  }
  tokens_ += other.tokens_;
  snapshots_ += other.snapshots_;
}

double DimensionProfile::mean_abs(std::size_t dim) const noexcept {
  return tokens_ == 0 ? 0.0 : sums_[dim] / static_cast<double>(tokens_);
}

nlohmann::json DimensionProfile::to_json() const {
  return {{"kind", "dimension_profile"}, {"hidden_size", hidden_size()}, {"snapshots", snapshots_},
          {"token_count", tokens_},      {"max", peaks_},                {"sum", sums_}};
}

DimensionProfile DimensionProfile::from_stats(std::vector<float> peaks, std::vector<double> abs_sums,
                                              std::uint64_t token_count, std::uint64_t snapshots) {
  DimensionProfile p(peaks.size());
  if (abs_sums.size() != peaks.size()) throw ShapeMismatch("peak and sum arrays differ in length");
  for (std::size_t d = 0; d < peaks.size(); ++d) {
    if (!(peaks[d] >= 0.0f) || !std::isfinite(peaks[d]) || !(abs_sums[d] >= 0.0) || !std::isfinite(abs_sums[d])) {
      throw InvalidArgument("negative or non-finite statistics at dim " + std::to_string(d));
    }
  }
  p.peaks_ = std::move(peaks);
  p.sums_ = std::move(abs_sums);
  p.tokens_ = token_count;
  p.snapshots_ = snapshots;
  return p;
}

DimensionProfile DimensionProfile::from_json(const nlohmann::json& j) {
  try {
    if (j.value("kind", std::string{}) != "dimension_profile") {
      throw InvalidArgument("profile JSON must have kind 'dimension_profile'");
    }
    const auto hidden = j.at("hidden_size").get<std::size_t>();
    auto peaks = j.at("max").get<std::vector<float>>();
    if (peaks.size() != hidden) throw ShapeMismatch("profile JSON arrays do not match hidden_size");
    return from_stats(std::move(peaks), j.at("sum").get<std::vector<double>>(),
                      j.at("token_count").get<std::uint64_t>(), j.at("snapshots").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed profile JSON: ") + e.what());
  }
}

DimensionProfile accumulate_dim(DimensionProfile profile, const ActivationTensor& snapshot) {
  profile.accumulate(snapshot);
  return profile;
}

DimensionProfile merge(const DimensionProfile& a, const DimensionProfile& b) {
  DimensionProfile out = a;
  out.merge_from(b);
  return out;
}

DimensionProfile profile_batched(std::span<const ActivationTensor> snapshots) {
  if (snapshots.empty()) throw EmptyProfile("no snapshots to profile");
  const std::size_t dims = snapshots.front().cols();
  std::vector<float> peaks(dims, 0.0f);
  std::vector<double> sums(dims, 0.0);
  std::uint64_t tokens = 0;
  for (const auto& s : snapshots) {
    if (s.cols() != dims) throw ShapeMismatch("snapshots disagree on hidden size");
    tokens += s.rows();
  }
  for (std::size_t d = 0; d < dims; ++d) {
    for (const auto& s : snapshots) {
      for (std::size_t r = 0; r < s.rows(); ++r) {
        const float a = std::fabs(s(r, d));
        peaks[d] = std::max(peaks[d], a);
        sums[d] += a;
      }
    }
  }
  return DimensionProfile::from_stats(std::move(peaks), std::move(sums), tokens, snapshots.size());
}

std::string_view to_string(DimClass c) noexcept {
  switch (c) {
    case DimClass::ma: return "MA";
    case DimClass::weak_ma: return "weak_MA";
    case DimClass::normal: return "normal";
  }
  return "unknown";
}

std::vector<std::size_t> MAReport::dims_of(DimClass c) const {
  std::vector<std::size_t> out;
  for (const auto& e : entries) {
    if (e.cls == c) out.push_back(e.dim);
  }
  return out;
}

nlohmann::json MAReport::to_json() const {
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json row{{"dim", e.dim},
                       {"peak", e.peak},
                       {"peak_to_mean", e.peak_to_mean},
                       {"class", std::string(to_string(e.cls))}};
    row["peak_to_median"] = e.peak_to_median ? nlohmann::json(*e.peak_to_median) : nlohmann::json(nullptr);
    dims.push_back(std::move(row));
  }
  return {{"reference_mean", reference_mean},
          {"median_peak", median_peak},
          {"mu", mu},
          {"sigma", sigma},
          {"ma_threshold", ma_threshold},
          {"sigma_mult", sigma_mult},
          {"ma_dims", dims_of(DimClass::ma)},
          {"weak_ma_dims", dims_of(DimClass::weak_ma)},
          {"dims", std::move(dims)}};
}

MAReport classify(const DimensionProfile& profile, double ma_threshold, double sigma_mult) {
  if (profile.empty()) throw EmptyProfile("cannot classify a profile with no accumulated snapshots");
  const auto peaks = profile.peaks();
  const double n = static_cast<double>(peaks.size());

  MAReport report;
  report.ma_threshold = ma_threshold;
  report.sigma_mult = sigma_mult;

  double sum = 0.0;
  for (float p : peaks) sum += p;
  report.reference_mean = sum / n;
  report.mu = report.reference_mean;
  double ss = 0.0;
  for (float p : peaks) ss += (p - report.mu) * (p - report.mu);
  report.sigma = std::sqrt(ss / n);

  std::vector<float> sorted(peaks.begin(), peaks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  report.median_peak = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (double(sorted[mid - 1]) + sorted[mid]);

  const double cutoff = report.mu + sigma_mult * report.sigma;
  report.entries.reserve(peaks.size());
  for (std::size_t d = 0; d < peaks.size(); ++d) {
    DimensionEntry e;
    e.dim = d;
    e.peak = peaks[d];
    e.peak_to_mean = report.reference_mean > 0.0 ? peaks[d] / report.reference_mean : 0.0;
    if (report.median_peak > 0.0) e.peak_to_median = peaks[d] / report.median_peak;
    if (peaks[d] > cutoff) {
      e.cls = e.peak_to_mean > ma_threshold ? DimClass::ma : DimClass::weak_ma;
    }
    report.entries.push_back(e);
  }
  return report;
}

void write_ma_csv(std::ostream& out, const MAReport& report) {
  out << "dim,peak,peak_to_mean,peak_to_median,class\n";
  for (const auto& e : report.entries) {
    out << e.dim << ',' << fmt(e.peak) << ',' << fmt(e.peak_to_mean) << ','
        << (e.peak_to_median ? fmt(*e.peak_to_median) : std::string{}) << ',' << to_string(e.cls) << '\n';
  }
}

std::optional<double> PositionalProfile::GroupStats::mean(TokenGroup g) const {
  const auto i = static_cast<std::size_t>(g);
  if (count[i] == 0) return std::nullopt;
  return sum[i] / static_cast<double>(count[i]);
}

PositionalProfile::PositionalProfile(const TokenTopology& topo, double p, std::vector<std::size_t> dims)
    : topo_(topo), p_(p), dims_(std::move(dims)), groups_(token_groups(topo, p)) {
  if (dims_.empty()) throw InvalidArgument("positional profile needs at least one dimension");
}

void PositionalProfile::accumulate(const ActivationTensor& snapshot, std::int64_t step_index) {
  if (snapshot.rows() != topo_.total_tokens()) {
    throw ShapeMismatch("snapshot has " + std::to_string(snapshot.rows()) + " tokens, topology has " +
                        std::to_string(topo_.total_tokens()));
  }
  for (std::size_t d : dims_) {
    if (d >= snapshot.cols()) throw InvalidArgument("profiled dim " + std::to_string(d) + " out of range");
  }
  auto& stats = steps_[step_index];
  for (std::size_t r = 0; r < snapshot.rows(); ++r) {
    const auto g = static_cast<std::size_t>(groups_[r]);
    for (std::size_t d : dims_) {
      stats.sum[g] += std::fabs(snapshot(r, d));
    }
    stats.count[g] += dims_.size();
  }
}

void PositionalProfile::merge_from(const PositionalProfile& other) {
  if (other.topo_ != topo_ || other.p_ != p_ || other.dims_ != dims_) {
    throw ShapeMismatch("cannot merge positional profiles with different topology, p or dims");
  }
  for (const auto& [step, s] : other.steps_) {
    auto& mine = steps_[step];
    for (std::size_t g = 0; g < 3; ++g) {
      mine.sum[g] += s.sum[g];
      mine.count[g] += s.count[g];
    }
  }
}

PositionalProfile accumulate_positional(PositionalProfile profile, const ActivationTensor& snapshot,
                                        std::int64_t step_index) {
  profile.accumulate(snapshot, step_index);
  return profile;
}

std::vector<RatioPoint> boundary_interior_ratio(const PositionalProfile& profile) {
  std::vector<RatioPoint> out;
  for (const auto& [step, stats] : profile.steps()) {
    RatioPoint pt{step, std::nullopt};
    const auto b = stats.mean(TokenGroup::boundary);
    const auto i = stats.mean(TokenGroup::interior);
    if (b && i && *i > 0.0) pt.ratio = *b / *i;
    out.push_back(pt);
  }
  return out;
}

void write_positional_csv(std::ostream& out, const PositionalProfile& profile) {
  out << "step,first_mean,boundary_mean,interior_mean,ratio\n";
  const auto opt = [](std::optional<double> v) { return v ? fmt(*v) : std::string{}; };
  const auto ratios = boundary_interior_ratio(profile);
  std::size_t k = 0;
  for (const auto& [step, stats] : profile.steps()) {
    out << step << ',' << opt(stats.mean(TokenGroup::first_frame)) << ',' << opt(stats.mean(TokenGroup::boundary))
        << ',' << opt(stats.mean(TokenGroup::interior)) << ',' << opt(ratios[k++].ratio) << '\n';
  }
}

nlohmann::json positional_to_json(const PositionalProfile& profile) {
  const auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json steps = nlohmann::json::array();
  const auto ratios = boundary_interior_ratio(profile);
  std::size_t k = 0;
  for (const auto& [step, stats] : profile.steps()) {
    steps.push_back({{"step", step},
                     {"first_mean", opt(stats.mean(TokenGroup::first_frame))},
                     {"boundary_mean", opt(stats.mean(TokenGroup::boundary))},
                     {"interior_mean", opt(stats.mean(TokenGroup::interior))},
                     {"ratio", opt(ratios[k++].ratio)}});
  }
  return {{"boundary_percent", profile.boundary_percent()},
          {"dims", std::vector<std::size_t>(profile.dims().begin(), profile.dims().end())},
          {"steps", std::move(steps)}};
}

}  // namespace stas
