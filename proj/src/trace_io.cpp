#include "stas/trace_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace stas {

namespace {

constexpr std::size_t kReadChunk = 1 << 20;

void put_le(std::ostream& out, std::uint64_t value, int bytes) {
  std::array<char, 8> buf{};
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(buf.data(), bytes);
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t value = 0;
  for (int i = 0; i < bytes; ++i) value |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return value;
}

// Reads exactly n bytes; returns how many were actually available.
std::size_t read_exact(std::istream& in, unsigned char* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount());
}

std::uint64_t required_u64(const nlohmann::json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_number_integer() || (!it->is_number_unsigned() && it->get<std::int64_t>() < 0)) {
    throw InvalidArgument(std::string("metadata field '") + field + "' missing or not an unsigned integer");
  }
  return it->get<std::uint64_t>();
}

std::int64_t required_i64(const nlohmann::json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_number_integer()) {
    throw InvalidArgument(std::string("metadata field '") + field + "' missing or not an integer");
  }
  return it->get<std::int64_t>();
}

std::string required_string(const nlohmann::json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string()) {
    throw InvalidArgument(std::string("metadata field '") + field + "' missing or not a string");
  }
  return it->get<std::string>();
}

void check_finite(const Matrix& data, const std::string& context) {
  const auto values = data.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NonFiniteValue(context + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

void check_raw(const nlohmann::json& meta, const Matrix& data) {
  if (!meta.is_object()) throw InvalidArgument("record metadata must be a JSON object");
  const auto rows = required_u64(meta, "num_tokens");
  const auto cols = required_u64(meta, "hidden_size");
  if (rows != data.rows() || cols != data.cols()) {
    throw ShapeMismatch("record data " + shape_string(data) + " does not match metadata [" +
                        std::to_string(rows) + " x " + std::to_string(cols) + "]");
  }
  check_finite(data, "record payload");
}

}  // namespace

std::string_view to_string(Branch branch) noexcept { return branch == Branch::cond ? "cond" : "uncond"; }

Branch parse_branch(std::string_view text) {
  if (text == "cond") return Branch::cond;
  if (text == "uncond") return Branch::uncond;
  throw InvalidArgument("branch must be 'cond' or 'uncond', got '" + std::string(text) + "'");
}

TokenTopology TraceMeta::topology() const {
  return topology_from_latent(latent_frames, tokens_per_frame, r_temp);
}

nlohmann::json to_json(const TraceMeta& meta) {
  return nlohmann::json{{"model_id", meta.model_id},
                        {"block", meta.block},
                        {"step_index", meta.step_index},
                        {"sigma", meta.sigma},
                        {"branch", std::string(to_string(meta.branch))},
                        {"prompt_id", meta.prompt_id},
                        {"num_tokens", meta.num_tokens},
                        {"hidden_size", meta.hidden_size},
                        {"latent_frames", meta.latent_frames},
                        {"tokens_per_frame", meta.tokens_per_frame},
                        {"r_temp", meta.r_temp}};
}

TraceMeta trace_meta_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("trace metadata must be a JSON object");
  TraceMeta meta;
  meta.model_id = required_string(j, "model_id");
  meta.block = required_i64(j, "block");
  meta.step_index = required_i64(j, "step_index");
  auto sigma = j.find("sigma");
  if (sigma == j.end() || !sigma->is_number()) throw InvalidArgument("metadata field 'sigma' missing or not a number");
  meta.sigma = sigma->get<double>();
  meta.branch = parse_branch(required_string(j, "branch"));
  meta.prompt_id = required_string(j, "prompt_id");
  meta.num_tokens = required_u64(j, "num_tokens");
  meta.hidden_size = required_u64(j, "hidden_size");
  meta.latent_frames = required_u64(j, "latent_frames");
  meta.tokens_per_frame = required_u64(j, "tokens_per_frame");
  meta.r_temp = required_u64(j, "r_temp");
  validate(meta);
  return meta;
}

void validate(const TraceMeta& meta) {
  if (!(meta.sigma >= 0.0 && meta.sigma <= 1.0)) {
    throw InvalidArgument("sigma must lie in [0, 1], got " + std::to_string(meta.sigma));
  }
  if (meta.latent_frames < 1 || meta.tokens_per_frame < 1 || meta.r_temp < 1) {
    throw InvalidArgument("latent_frames, tokens_per_frame and r_temp must be >= 1");
  }
  if (meta.num_tokens != meta.latent_frames * meta.tokens_per_frame) {
    throw InvalidArgument("num_tokens " + std::to_string(meta.num_tokens) + " != latent_frames x tokens_per_frame");
  }
}

void validate(const TraceRecord& record) {
  validate(record.meta);
  if (record.data.rows() != record.meta.num_tokens || record.data.cols() != record.meta.hidden_size) {
    throw ShapeMismatch("record data " + shape_string(record.data) + " does not match metadata");
  }
  check_finite(record.data, "trace record");
}

std::string RawRecord::kind() const {
  auto it = meta.find("kind");
  if (it == meta.end()) return "activation";
  return it->is_string() ? it->get<std::string>() : std::string{};
}

RawRecord to_raw(const TraceRecord& record) { return RawRecord{to_json(record.meta), record.data}; }

TraceRecord from_raw(const RawRecord& raw) {
  if (raw.kind() != "activation") throw InvalidArgument("record kind '" + raw.kind() + "' is not an activation record");
  TraceRecord record{trace_meta_from_json(raw.meta), raw.data};
  validate(record);
  return record;
}

std::string_view to_string(TraceErrorCode code) noexcept {
  switch (code) {
    case TraceErrorCode::bad_magic: return "bad_magic";
    case TraceErrorCode::unsupported_version: return "unsupported_version";
    case TraceErrorCode::truncated: return "truncated";
    case TraceErrorCode::non_finite: return "non_finite";
    case TraceErrorCode::bad_metadata: return "bad_metadata";
    case TraceErrorCode::io: return "io";
  }
  return "unknown";
}

const char* TraceError::name() const noexcept {
  switch (code_) {
    case TraceErrorCode::bad_magic: return "trace_bad_magic";
    case TraceErrorCode::unsupported_version: return "trace_unsupported_version";
    case TraceErrorCode::truncated: return "trace_truncated";
    case TraceErrorCode::non_finite: return "trace_non_finite";
    case TraceErrorCode::bad_metadata: return "trace_bad_metadata";
    case TraceErrorCode::io: return "trace_io";
  }
  return "trace_error";
}

TraceWriter::TraceWriter(std::ostream& sink) : sink_(&sink) {
  sink_->write(kTraceMagic.data(), static_cast<std::streamsize>(kTraceMagic.size()));
  put_le(*sink_, kTraceVersion, 2);
  if (!*sink_) throw TraceError(TraceErrorCode::io, "failed to write trace header");
  bytes_ += kTraceHeaderBytes;
}

void TraceWriter::append(const TraceRecord& record) {
  validate(record);
  append_unchecked(to_json(record.meta), record.data);
}

void TraceWriter::append(const RawRecord& record) {
  check_raw(record.meta, record.data);
  append_unchecked(record.meta, record.data);
}

void TraceWriter::append_unchecked(const nlohmann::json& meta, const Matrix& data) {
  const std::string text = meta.dump();
  if (text.size() > 0xFFFFFFFFull) throw InvalidArgument("metadata too large");
  put_le(*sink_, text.size(), 4);
  sink_->write(text.data(), static_cast<std::streamsize>(text.size()));
  const std::uint64_t payload = static_cast<std::uint64_t>(data.size()) * 4;
  put_le(*sink_, payload, 8);
  std::vector<char> buf(data.size() * 4);
  const auto values = data.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  sink_->write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!*sink_) throw TraceError(TraceErrorCode::io, "failed to write trace record");
  bytes_ += 4 + text.size() + 8 + payload;
}

void TraceWriter::flush() {
  sink_->flush();
  if (!*sink_) throw TraceError(TraceErrorCode::io, "failed to flush trace stream");
}

std::uint64_t write_records(std::span<const TraceRecord> records, std::ostream& sink) {
  for (const auto& r : records) validate(r);
  TraceWriter writer(sink);
  for (const auto& r : records) writer.append(r);
  writer.flush();
  return writer.bytes_written();
}

std::uint64_t write_raw_records(std::span<const RawRecord> records, std::ostream& sink) {
  for (const auto& r : records) check_raw(r.meta, r.data);
  TraceWriter writer(sink);
  for (const auto& r : records) writer.append(r);
  writer.flush();
  return writer.bytes_written();
}

TraceReader::TraceReader(std::istream& source) : source_(&source) {
  std::array<unsigned char, kTraceHeaderBytes> header{};
  const std::size_t got = read_exact(*source_, header.data(), header.size());
  if (got < kTraceMagic.size() || std::memcmp(header.data(), kTraceMagic.data(), kTraceMagic.size()) != 0) {
    throw TraceError(TraceErrorCode::bad_magic, "missing STAS magic bytes");
  }
  if (got < header.size()) throw TraceError(TraceErrorCode::truncated, "truncated trace header");
  const auto version = get_le(header.data() + 4, 2);
  if (version != kTraceVersion) {
    throw TraceError(TraceErrorCode::unsupported_version, "unsupported trace version " + std::to_string(version));
  }
}

std::optional<RawRecord> TraceReader::next_raw() {
  const std::size_t index = index_;
  const auto truncated = [index](const std::string& where) {
    return TraceError(TraceErrorCode::truncated, "record " + std::to_string(index) + " truncated in " + where, index);
  };

  std::array<unsigned char, 8> len{};
  const std::size_t got = read_exact(*source_, len.data(), 4);
  if (got == 0) return std::nullopt;
  if (got < 4) throw truncated("metadata length");
  const auto meta_len = get_le(len.data(), 4);

  std::string text(meta_len, '\0');
  if (read_exact(*source_, reinterpret_cast<unsigned char*>(text.data()), meta_len) < meta_len) {
    throw truncated("metadata");
  }
  if (read_exact(*source_, len.data(), 8) < 8) throw truncated("payload length");
  const auto payload_len = get_le(len.data(), 8);

  RawRecord record;
  try {
    record.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw TraceError(TraceErrorCode::bad_metadata, "record " + std::to_string(index) + ": " + e.what(), index);
  }
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  try {
    if (!record.meta.is_object()) throw InvalidArgument("metadata is not a JSON object");
    rows = required_u64(record.meta, "num_tokens");
    cols = required_u64(record.meta, "hidden_size");
  } catch (const InvalidArgument& e) {
    throw TraceError(TraceErrorCode::bad_metadata, "record " + std::to_string(index) + ": " + e.what(), index);
  }
  if (payload_len % 4 != 0 || payload_len / 4 != rows * cols) {
    throw TraceError(TraceErrorCode::bad_metadata,
                     "record " + std::to_string(index) + ": payload length " + std::to_string(payload_len) +
                         " does not match shape [" + std::to_string(rows) + " x " + std::to_string(cols) + "]",
                     index);
  }

  // Chunked so a corrupted length cannot force one huge allocation up front.
  std::vector<unsigned char> bytes;
  std::uint64_t remaining = payload_len;
  while (remaining > 0) {
    const std::size_t chunk = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, kReadChunk));
    const std::size_t offset = bytes.size();
    bytes.resize(offset + chunk);
    if (read_exact(*source_, bytes.data() + offset, chunk) < chunk) throw truncated("payload");
    remaining -= chunk;
  }
  std::vector<float> values(payload_len / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes.data() + 4 * i, 4)));
    if (!std::isfinite(values[i])) {
      throw TraceError(TraceErrorCode::non_finite,
                       "record " + std::to_string(index) + ": non-finite value at flat index " + std::to_string(i),
                       index);
    }
  }
  record.data = Matrix(rows, cols, std::move(values));
  ++index_;
  return record;
}

std::optional<TraceRecord> TraceReader::next() {
  auto raw = next_raw();
  if (!raw) return std::nullopt;
  const std::size_t index = index_ - 1;
  try {
    return from_raw(*raw);
  } catch (const InvalidArgument& e) {
    throw TraceError(TraceErrorCode::bad_metadata, "record " + std::to_string(index) + ": " + e.what(), index);
  }
}

std::vector<TraceRecord> read_records(std::istream& source) {
  TraceReader reader(source);
  std::vector<TraceRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

std::vector<RawRecord> read_raw_records(std::istream& source) {
  TraceReader reader(source);
  std::vector<RawRecord> out;
  while (auto r = reader.next_raw()) out.push_back(std::move(*r));
  return out;
}

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TraceError(TraceErrorCode::io, "cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TraceError(TraceErrorCode::io, "cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

std::vector<TraceRecord> read_trace_file(const std::string& path) {
  auto in = open_in(path);
  return read_records(in);
}

std::vector<RawRecord> read_raw_trace_file(const std::string& path) {
  auto in = open_in(path);
  return read_raw_records(in);
}

std::uint64_t write_trace_file(const std::string& path, std::span<const TraceRecord> records) {
  for (const auto& r : records) validate(r);
  auto out = open_out(path);
  return write_records(records, out);
}

std::uint64_t write_raw_trace_file(const std::string& path, std::span<const RawRecord> records) {
  for (const auto& r : records) check_raw(r.meta, r.data);
  auto out = open_out(path);
  return write_raw_records(records, out);
}

}  // namespace stas
