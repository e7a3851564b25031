#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace ccb {

enum class ExtractionMode { mean, last };

std::string to_string(ExtractionMode mode);
ExtractionMode extraction_mode_from_string(const std::string& text);

inline constexpr std::uint32_t kTraceFormatVersion = 1;

struct TraceHeader {
  std::uint32_t format_version = kTraceFormatVersion;
  std::string model_id;
  std::string dataset_id;
  int num_layers = 0;  // L, layer L-1 is the final layer
  int hidden_dim = 0;  // D
  ExtractionMode extraction_mode = ExtractionMode::mean;
  double stored_temperature = 1.5;
  std::uint64_t record_count = 0;

  bool operator==(const TraceHeader&) const = default;
};

struct TraceRecord {
  std::uint64_t example_id = 0;
  std::uint8_t label = 0;  // 1 = correct, 0 = incorrect / hallucinated
  float p_semantic_t = 0.0f;
  float p_semantic_raw = 0.0f;
  std::vector<float> hidden;  // num_layers * hidden_dim, layer-major

  bool operator==(const TraceRecord&) const = default;
};

struct TraceSet {
  TraceHeader header;
  std::vector<TraceRecord> records;

  /// Pooled hidden vector of record `index` at `layer`.
  std::span<const float> hidden(std::size_t index, int layer) const;

  std::size_t size() const { return records.size(); }
  std::size_t count_label(std::uint8_t label) const;

  bool operator==(const TraceSet&) const = default;
};

/// Throws ValidationError if any header or record invariant is violated.
void validate(const TraceSet& set);

/// Serializes to the CCBT v1 byte layout. Validates first.
std::vector<std::byte> encode_trace(const TraceSet& set);

/// Parses CCBT v1 bytes. Throws FormatError, CorruptionError or ValidationError.
TraceSet decode_trace(std::span<const std::byte> bytes);

/// Atomic write: the bytes go to a sibling temp file which is fsynced and
/// renamed over `path`. On any failure `path` is left untouched.
void write_trace(const TraceSet& set, const std::filesystem::path& path);

TraceSet read_trace(const std::filesystem::path& path);

/// Keeps every minority-class record and a uniformly random, order-preserving
/// subset of the majority class of the same size.
TraceSet balance_classes(const TraceSet& set, std::uint64_t seed);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Per-class proportional split into (train, val, test). Each part receives at
/// least one member of each class; records keep their input order.
std::tuple<TraceSet, TraceSet, TraceSet> stratified_split(const TraceSet& set,
                                                          SplitFractions fractions,
                                                          std::uint64_t seed);

namespace detail {

/// Test seam for crash simulation: writes only the first `crash_after` bytes
/// of the encoded trace to the temp file and abandons it without renaming,
/// as a killed writer would. Returns the temp file path.
std::filesystem::path write_trace_crashing(const TraceSet& set, const std::filesystem::path& path,
                                           std::size_t crash_after);

}  // namespace detail

}  // namespace ccb
