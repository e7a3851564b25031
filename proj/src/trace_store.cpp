#include "ccb/trace_store.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ccb/errors.hpp"
#include "ccb/rng.hpp"
#include "json.hpp"

namespace ccb {

namespace {

constexpr char kMagic[4] = {'C', 'C', 'B', 'T'};
constexpr char kFooterMagic[4] = {'T', 'B', 'C', 'C'};
// example_id u64, label u8, p_semantic_T f32, p_semantic_raw f32
constexpr std::size_t kRecordFixedBytes = 8 + 1 + 4 + 4;
constexpr std::size_t kPreambleBytes = 4 + 4 + 4;
constexpr std::size_t kFooterBytes = 4 + 4;

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    const T le = to_little(value);
    const auto* p = reinterpret_cast<const std::byte*>(&le);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::byte>& bytes() { return out_; }

 private:
  std::vector<std::byte> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  template <typename T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(value);
  }
  std::span<const std::byte> take(std::size_t n) {
    require(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("trace truncated");
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::byte> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset), static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

nlohmann::ordered_json header_to_json(const TraceHeader& h) {
  nlohmann::ordered_json j;
  j["format_version"] = h.format_version;
  j["model_id"] = h.model_id;
  j["dataset_id"] = h.dataset_id;
  j["num_layers"] = h.num_layers;
  j["hidden_dim"] = h.hidden_dim;
  j["extraction_mode"] = to_string(h.extraction_mode);
  j["stored_temperature"] = h.stored_temperature;
  j["record_count"] = h.record_count;
  return j;
}

TraceHeader header_from_json(std::span<const std::byte> text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(reinterpret_cast<const char*>(text.data()),
                              reinterpret_cast<const char*>(text.data() + text.size()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("trace header is not valid JSON: ") + e.what());
  }
  static const char* kKeys[] = {"format_version", "model_id",        "dataset_id",         "num_layers",
                                "hidden_dim",     "extraction_mode", "stored_temperature", "record_count"};
  if (!j.is_object() || j.size() != std::size(kKeys)) throw FormatError("trace header has unexpected keys");
  for (const char* key : kKeys) {
    if (!j.contains(key)) throw FormatError(std::string("trace header missing key: ") + key);
  }
  TraceHeader h;
  try {
    h.format_version = j.at("format_version").get<std::uint32_t>();
    h.model_id = j.at("model_id").get<std::string>();
    h.dataset_id = j.at("dataset_id").get<std::string>();
    h.num_layers = j.at("num_layers").get<int>();
    h.hidden_dim = j.at("hidden_dim").get<int>();
    h.extraction_mode = extraction_mode_from_string(j.at("extraction_mode").get<std::string>());
    h.stored_temperature = j.at("stored_temperature").get<double>();
    h.record_count = j.at("record_count").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("trace header field has wrong type: ") + e.what());
  }
  return h;
}

void validate_header(const TraceHeader& h) {
  if (h.format_version != kTraceFormatVersion) throw ValidationError("unsupported format_version");
  if (h.num_layers < 1) throw ValidationError("num_layers must be >= 1");
  if (h.hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
  if (!(h.stored_temperature > 0.0) || !std::isfinite(h.stored_temperature)) {
    throw ValidationError("stored_temperature must be positive and finite");
  }
}

void validate_record(const TraceRecord& r, std::size_t expected_values, std::size_t index) {
  const auto where = [&] { return " (record " + std::to_string(index) + ")"; };
  if (r.label > 1) throw ValidationError("label must be 0 or 1" + where());
  const auto in_unit = [](float p) { return p >= 0.0f && p <= 1.0f; };
  if (!in_unit(r.p_semantic_t) || !in_unit(r.p_semantic_raw)) {
    throw ValidationError("p_semantic values must lie in [0, 1]" + where());
  }
  if (r.hidden.size() != expected_values) throw ValidationError("hidden vector has wrong size" + where());
  if (!std::all_of(r.hidden.begin(), r.hidden.end(), [](float v) { return std::isfinite(v); })) {
    throw ValidationError("hidden vector contains non-finite values" + where());
  }
}

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  return tmp;
}

void write_all(int fd, const std::byte* data, std::size_t n, const std::filesystem::path& where) {
  while (n > 0) {
    const ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw IoError("write failed: " + where.string() + ": " + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

int open_temp(const std::filesystem::path& tmp) {
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot create " + tmp.string() + ": " + std::strerror(errno));
  return fd;
}

void write_bytes_atomic(std::span<const std::byte> bytes, const std::filesystem::path& path) {
  const auto tmp = temp_sibling(path);
  const int fd = open_temp(tmp);
  try {
    write_all(fd, bytes.data(), bytes.size(), tmp);
    if (::fsync(fd) != 0) throw IoError("fsync failed: " + tmp.string());
  } catch (...) {
    ::close(fd);
    std::filesystem::remove(tmp);
    throw;
  }
  ::close(fd);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    const int err = errno;
    std::filesystem::remove(tmp);
    throw IoError("rename to " + path.string() + " failed: " + std::strerror(err));
  }
  // Persist the directory entry.
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

TraceSet with_records(const TraceSet& base, std::vector<TraceRecord> records) {
  TraceSet out;
  out.header = base.header;
  out.header.record_count = records.size();
  out.records = std::move(records);
  return out;
}

}  // namespace

std::string to_string(ExtractionMode mode) { return mode == ExtractionMode::mean ? "mean" : "last"; }

ExtractionMode extraction_mode_from_string(const std::string& text) {
  if (text == "mean") return ExtractionMode::mean;
  if (text == "last") return ExtractionMode::last;
  throw ValidationError("extraction_mode must be 'mean' or 'last', got '" + text + "'");
}

std::span<const float> TraceSet::hidden(std::size_t index, int layer) const {
  const auto dim = static_cast<std::size_t>(header.hidden_dim);
  return std::span<const float>(records[index].hidden).subspan(static_cast<std::size_t>(layer) * dim, dim);
}

std::size_t TraceSet::count_label(std::uint8_t label) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const TraceRecord& r) { return r.label == label; }));
}

void validate(const TraceSet& set) {
  validate_header(set.header);
  if (set.header.record_count != set.records.size()) {
    throw ValidationError("record_count " + std::to_string(set.header.record_count) + " does not match " +
                          std::to_string(set.records.size()) + " records");
  }
  const auto values = static_cast<std::size_t>(set.header.num_layers) * set.header.hidden_dim;
  for (std::size_t i = 0; i < set.records.size(); ++i) validate_record(set.records[i], values, i);
}

std::vector<std::byte> encode_trace(const TraceSet& set) {
  validate(set);
  const std::string header = header_to_json(set.header).dump();
  const auto values = static_cast<std::size_t>(set.header.num_layers) * set.header.hidden_dim;

  ByteWriter w;
  w.bytes().reserve(kPreambleBytes + header.size() + set.records.size() * (kRecordFixedBytes + 4 * values) +
                    kFooterBytes);
  w.put_raw(kMagic, 4);
  w.put<std::uint32_t>(kTraceFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
  w.put_raw(header.data(), header.size());
  for (const auto& r : set.records) {
    w.put<std::uint64_t>(r.example_id);
    w.put<std::uint8_t>(r.label);
    w.put<float>(r.p_semantic_t);
    w.put<float>(r.p_semantic_raw);
    if constexpr (std::endian::native == std::endian::little) {
      w.put_raw(r.hidden.data(), r.hidden.size() * sizeof(float));
    } else {
      for (float v : r.hidden) w.put<float>(v);
    }
  }
  const std::uint32_t crc = crc32_of(w.bytes());
  w.put<std::uint32_t>(crc);
  w.put_raw(kFooterMagic, 4);
  return std::move(w.bytes());
}

TraceSet decode_trace(std::span<const std::byte> bytes) {
  if (bytes.size() < kPreambleBytes + kFooterBytes) throw FormatError("trace file too short");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, not a CCBT trace");
  if (std::memcmp(bytes.data() + bytes.size() - 4, kFooterMagic, 4) != 0) {
    throw FormatError("bad footer magic, trace truncated or damaged");
  }
  const auto body = bytes.first(bytes.size() - kFooterBytes);
  ByteReader footer(bytes.subspan(body.size(), 4));
  if (footer.get<std::uint32_t>() != crc32_of(body)) throw CorruptionError("trace checksum mismatch");

  ByteReader r(body);
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kTraceFormatVersion) throw FormatError("unsupported CCBT version " + std::to_string(version));
  const auto header_len = r.get<std::uint32_t>();
  TraceSet set;
  set.header = header_from_json(r.take(header_len));
  validate_header(set.header);

  const auto values = static_cast<std::size_t>(set.header.num_layers) * set.header.hidden_dim;
  const std::size_t record_bytes = kRecordFixedBytes + 4 * values;
  const std::size_t remaining = body.size() - r.position();
  if (remaining % record_bytes != 0 || remaining / record_bytes != set.header.record_count) {
    throw ValidationError("record_count does not match the records present");
  }
  set.records.resize(set.header.record_count);
  for (auto& rec : set.records) {
    rec.example_id = r.get<std::uint64_t>();
    rec.label = r.get<std::uint8_t>();
    rec.p_semantic_t = r.get<float>();
    rec.p_semantic_raw = r.get<float>();
    rec.hidden.resize(values);
    for (auto& v : rec.hidden) v = r.get<float>();
  }
  validate(set);
  return set;
}

void write_trace(const TraceSet& set, const std::filesystem::path& path) {
  const auto bytes = encode_trace(set);
  write_bytes_atomic(bytes, path);
}

TraceSet read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return decode_trace(std::as_bytes(std::span<const char>(raw)));
}

TraceSet balance_classes(const TraceSet& set, std::uint64_t seed) {
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    (set.records[i].label == 1 ? positives : negatives).push_back(i);
  }
  if (positives.empty() || negatives.empty()) {
    throw DegenerateInputError("cannot balance classes: one class is empty");
  }
  auto& majority = positives.size() > negatives.size() ? positives : negatives;
  const auto& minority = positives.size() > negatives.size() ? negatives : positives;

  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(majority));
  majority.resize(minority.size());

  std::vector<std::size_t> keep(positives);
  keep.insert(keep.end(), negatives.begin(), negatives.end());
  std::sort(keep.begin(), keep.end());

  std::vector<TraceRecord> records;
  records.reserve(keep.size());
  for (auto i : keep) records.push_back(set.records[i]);
  return with_records(set, std::move(records));
}

std::tuple<TraceSet, TraceSet, TraceSet> stratified_split(const TraceSet& set, SplitFractions fractions,
                                                          std::uint64_t seed) {
  const double f[3] = {fractions.train, fractions.val, fractions.test};
  for (double v : f) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("split fractions must be positive");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");

  std::vector<int> part(set.records.size(), 0);
  Rng rng(seed);
  for (std::uint8_t label : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < set.records.size(); ++i) {
      if (set.records[i].label == label) members.push_back(i);
    }
    const auto n = static_cast<long>(members.size());
    if (n < 3) {
      throw DegenerateInputError("class " + std::to_string(label) + " has " + std::to_string(n) +
                                 " members; stratified split needs at least 3");
    }
    rng.shuffle(std::span<std::size_t>(members));
    long n_val = std::max(1L, std::lround(f[1] * static_cast<double>(n)));
    long n_test = std::max(1L, std::lround(f[2] * static_cast<double>(n)));
    while (n - n_val - n_test < 1) {
      if (n_val >= n_test && n_val > 1) {
        --n_val;
      } else {
        --n_test;
      }
    }
    const long n_train = n - n_val - n_test;
    for (long k = 0; k < n; ++k) part[members[k]] = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
  }

  std::vector<TraceRecord> parts[3];
  for (std::size_t i = 0; i < set.records.size(); ++i) parts[part[i]].push_back(set.records[i]);
  return {with_records(set, std::move(parts[0])), with_records(set, std::move(parts[1])),
          with_records(set, std::move(parts[2]))};
}

namespace detail {

std::filesystem::path write_trace_crashing(const TraceSet& set, const std::filesystem::path& path,
                                           std::size_t crash_after) {
  const auto bytes = encode_trace(set);
  const auto tmp = temp_sibling(path);
  const int fd = open_temp(tmp);
  write_all(fd, bytes.data(), std::min(crash_after, bytes.size()), tmp);
  ::close(fd);
  return tmp;
}

}  // namespace detail

}  // namespace ccb
