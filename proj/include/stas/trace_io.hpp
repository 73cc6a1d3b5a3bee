#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "stas/error.hpp"
#include "stas/tensor.hpp"
#include "stas/topology.hpp"

namespace stas {

// Byte layout (all integers little-endian):
//   file   := "STAS" u16(version=1) record*
//   record := u32(meta_len) meta_json[meta_len] u64(payload_len) f32[payload_len / 4]
// meta_json is a UTF-8 JSON object carrying at least num_tokens and hidden_size,
// which give the row-major payload shape. Activation records carry exactly the
// TraceMeta fields; other record kinds add a "kind" field (see docs/trace-format.md).
inline constexpr std::string_view kTraceMagic = "STAS";
inline constexpr std::uint16_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderBytes = 6;

enum class Branch { cond, uncond };

std::string_view to_string(Branch branch) noexcept;
Branch parse_branch(std::string_view text);

struct TraceMeta {
  std::string model_id;
  std::int64_t block = 0;
  std::int64_t step_index = 0;
  double sigma = 1.0;
  Branch branch = Branch::cond;
  std::string prompt_id;
  std::uint64_t num_tokens = 0;
  std::uint64_t hidden_size = 0;
  std::uint64_t latent_frames = 1;
  std::uint64_t tokens_per_frame = 0;
  std::uint64_t r_temp = 1;

  TokenTopology topology() const;
  friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
};

nlohmann::json to_json(const TraceMeta& meta);
TraceMeta trace_meta_from_json(const nlohmann::json& j);

// Checks TraceMeta invariants; throws InvalidArgument.
void validate(const TraceMeta& meta);

struct TraceRecord {
  TraceMeta meta;
  ActivationTensor data;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

void validate(const TraceRecord& record);

// Framing-level record of any kind.
struct RawRecord {
  nlohmann::json meta;
  Matrix data;

  std::string kind() const;  // "activation" when the field is absent
};

RawRecord to_raw(const TraceRecord& record);
TraceRecord from_raw(const RawRecord& raw);

enum class TraceErrorCode { bad_magic, unsupported_version, truncated, non_finite, bad_metadata, io };

std::string_view to_string(TraceErrorCode code) noexcept;

class TraceError : public Error {
 public:
  TraceError(TraceErrorCode code, const std::string& what, std::optional<std::size_t> record = std::nullopt)
      : Error(code == TraceErrorCode::io ? ErrorKind::runtime : ErrorKind::input, what),
        code_(code),
        record_(record) {}
  TraceErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> record_index() const noexcept { return record_; }
  const char* name() const noexcept override;

 private:
  TraceErrorCode code_;
  std::optional<std::size_t> record_;
};

// Streaming writer: the header goes out on construction, each append emits one record.
class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& sink);
  void append(const TraceRecord& record);
  void append(const RawRecord& record);
  std::uint64_t bytes_written() const noexcept { return bytes_; }
  void flush();

 private:
  void append_unchecked(const nlohmann::json& meta, const Matrix& data);
  std::ostream* sink_;
  std::uint64_t bytes_ = 0;
};

// Validates every record first; nothing is written if any record is invalid.
std::uint64_t write_records(std::span<const TraceRecord> records, std::ostream& sink);
std::uint64_t write_raw_records(std::span<const RawRecord> records, std::ostream& sink);

// Lazily reads one record at a time.
class TraceReader {
 public:
  explicit TraceReader(std::istream& source);

  std::optional<RawRecord> next_raw();
  // Activation records only; any other kind is a bad_metadata error.
  std::optional<TraceRecord> next();
  std::size_t records_read() const noexcept { return index_; }

 private:
  std::istream* source_;
  std::size_t index_ = 0;
};

std::vector<TraceRecord> read_records(std::istream& source);
std::vector<RawRecord> read_raw_records(std::istream& source);

std::vector<TraceRecord> read_trace_file(const std::string& path);
std::vector<RawRecord> read_raw_trace_file(const std::string& path);
std::uint64_t write_trace_file(const std::string& path, std::span<const TraceRecord> records);
std::uint64_t write_raw_trace_file(const std::string& path, std::span<const RawRecord> records);

}  // namespace stas
