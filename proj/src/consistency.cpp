#include "stas/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "stas/error.hpp"

namespace stas {

std::vector<double> pairwise_similarity(const FrameEmbeddingSet& emb) {
  const Matrix& e = emb.embeddings;
  if (e.rows() < 2) throw InvalidArgument("similarity needs at least two frames");
  if (e.cols() == 0) throw InvalidArgument("embeddings have zero length");
  std::vector<double> norms(e.rows());
  for (std::size_t f = 0; f < e.rows(); ++f) {
    double ss = 0.0;
    for (float v : e.row(f)) ss += static_cast<double>(v) * v;
    norms[f] = std::sqrt(ss);
  }
  std::vector<double> sims(e.rows() - 1);
  for (std::size_t f = 0; f + 1 < e.rows(); ++f) {
    if (norms[f] == 0.0 || norms[f + 1] == 0.0) {
      throw UndefinedSimilarity("zero embedding vector in frame pair " + std::to_string(f), f);
    }
    const auto a = e.row(f);
    const auto b = e.row(f + 1);
    double dot = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) dot += static_cast<double>(a[j]) * b[j];
    sims[f] = std::clamp(dot / (norms[f] * norms[f + 1]), -1.0, 1.0);
  }
  return sims;
}

ConsistencyReport partition_report(std::span<const double> sims, const TokenTopology& topo) {
  if (topo.pixel_frames < 2 || sims.size() != topo.pixel_frames - 1) {
    throw ShapeMismatch("similarity series has " + std::to_string(sims.size()) + " pairs, topology has " +
                        std::to_string(topo.pixel_frames) + " frames");
  }
  ConsistencyReport r;
  r.similarity.assign(sims.begin(), sims.end());
  double cross = 0.0;
  double within = 0.0;
  for (std::size_t f = 0; f < sims.size(); ++f) {
    const auto label = classify_frame_pair(topo, f);
    r.labels.push_back(label);
    if (label == PairLabel::cross_chunk) {
      cross += sims[f];
      ++r.cross_count;
    } else {
      within += sims[f];
      ++r.within_count;
    }
  }
  if (r.cross_count > 0) r.cross_chunk_mean = cross / static_cast<double>(r.cross_count);
  if (r.within_count > 0) r.within_chunk_mean = within / static_cast<double>(r.within_count);
  return r;
}

namespace {

nlohmann::json opt_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json ConsistencyReport::summary_json() const {
  nlohmann::json empty = nlohmann::json::array();
  if (cross_count == 0) empty.push_back("cross_chunk");
  if (within_count == 0) empty.push_back("within_chunk");
  return {{"pairs", similarity.size()},
          {"cross_chunk_pairs", cross_count},
          {"within_chunk_pairs", within_count},
          {"cross_chunk_mean", opt_json(cross_chunk_mean)},
          {"within_chunk_mean", opt_json(within_chunk_mean)},
          {"empty_labels", std::move(empty)}};
}

void write_consistency_csv(std::ostream& out, const ConsistencyReport& report) {
  out << "pair_index,frame_a,frame_b,label,similarity_x100\n";
  for (std::size_t f = 0; f < report.similarity.size(); ++f) {
    out << f << ',' << f << ',' << f + 1 << ',' << to_string(report.labels[f]) << ',' << std::setprecision(9)
        << report.similarity[f] * 100.0 << '\n';
  }
}

nlohmann::json PooledSummary::to_json() const {
  return {{"videos", videos},
          {"uniform_over_videos", {{"cross_chunk_mean", opt_json(cross_uniform_over_videos)},
                                   {"within_chunk_mean", opt_json(within_uniform_over_videos)}}},
          {"pooled_over_pairs", {{"cross_chunk_mean", opt_json(cross_pooled_over_pairs)},
                                 {"within_chunk_mean", opt_json(within_pooled_over_pairs)}}}};
}

PooledSummary pool_reports(std::span<const ConsistencyReport> reports) {
  PooledSummary s;
  s.videos = reports.size();
  double cu = 0.0, wu = 0.0, cp = 0.0, wp = 0.0;
  std::size_t cu_n = 0, wu_n = 0, cp_n = 0, wp_n = 0;
  for (const auto& r : reports) {
    if (r.cross_chunk_mean) {
      cu += *r.cross_chunk_mean;
      ++cu_n;
      cp += *r.cross_chunk_mean * static_cast<double>(r.cross_count);
      cp_n += r.cross_count;
    }
    if (r.within_chunk_mean) {
      wu += *r.within_chunk_mean;
      ++wu_n;
      wp += *r.within_chunk_mean * static_cast<double>(r.within_count);
      wp_n += r.within_count;
    }
  }
  if (cu_n) s.cross_uniform_over_videos = cu / static_cast<double>(cu_n);
  if (wu_n) s.within_uniform_over_videos = wu / static_cast<double>(wu_n);
  if (cp_n) s.cross_pooled_over_pairs = cp / static_cast<double>(cp_n);
  if (wp_n) s.within_pooled_over_pairs = wp / static_cast<double>(wp_n);
  return s;
}

RawRecord to_record(const FrameEmbeddingSet& emb) {
  nlohmann::json meta{{"kind", "frame_embeddings"},
                      {"source_label", emb.source_label},
                      {"video_id", emb.video_id},
                      {"num_tokens", emb.embeddings.rows()},
                      {"hidden_size", emb.embeddings.cols()}};
  if (emb.r_temp) meta["r_temp"] = *emb.r_temp;
  return RawRecord{std::move(meta), emb.embeddings};
}

FrameEmbeddingSet embeddings_from_record(const RawRecord& record) {
  if (record.kind() != "frame_embeddings") {
    throw InvalidArgument("record kind '" + record.kind() + "' is not frame_embeddings");
  }
  FrameEmbeddingSet emb;
  emb.embeddings = record.data;
  emb.source_label = record.meta.value("source_label", std::string{});
  emb.video_id = record.meta.value("video_id", std::string{});
  if (auto it = record.meta.find("r_temp"); it != record.meta.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 1) throw InvalidArgument("r_temp must be a positive integer");
    emb.r_temp = it->get<std::size_t>();
  }
  return emb;
}

}  // namespace stas
