#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "stas/tensor.hpp"
#include "stas/topology.hpp"
#include "stas/trace_io.hpp"

namespace stas {

// One feature vector per decoded frame (rows = frames).
struct FrameEmbeddingSet {
  Matrix embeddings;
  std::string source_label;
  std::string video_id;
  std::optional<std::size_t> r_temp;  // topology hint carried by embedding files

  std::size_t frame_count() const noexcept { return embeddings.rows(); }
};

// Cosine similarity of each consecutive frame pair, in [-1, 1].
std::vector<double> pairwise_similarity(const FrameEmbeddingSet& emb);

struct ConsistencyReport {
  std::vector<double> similarity;
  std::vector<PairLabel> labels;
  std::optional<double> cross_chunk_mean;  // absent when no pair has this label
  std::optional<double> within_chunk_mean;
  std::size_t cross_count = 0;
  std::size_t within_count = 0;

  nlohmann::json summary_json() const;
};

ConsistencyReport partition_report(std::span<const double> sims, const TokenTopology& topo);

// Columns: pair_index, frame_a, frame_b, label, similarity_x100
void write_consistency_csv(std::ostream& out, const ConsistencyReport& report);

// Aggregate over several videos, reported two ways: uniform over videos (mean
// of per-video means) and pooled over all pairs.
struct PooledSummary {
  std::size_t videos = 0;
  std::optional<double> cross_uniform_over_videos;
  std::optional<double> within_uniform_over_videos;
  std::optional<double> cross_pooled_over_pairs;
  std::optional<double> within_pooled_over_pairs;

  nlohmann::json to_json() const;
};

PooledSummary pool_reports(std::span<const ConsistencyReport> reports);

// Embedding sets as trace records of kind "frame_embeddings".
RawRecord to_record(const FrameEmbeddingSet& emb);
FrameEmbeddingSet embeddings_from_record(const RawRecord& record);

}  // namespace stas
