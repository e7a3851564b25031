#include <algorithm>
#include <fstream>
#include <map>

#include "ccb/errors.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace ccb;
using ccbtest::TempDir;

namespace {

std::vector<std::byte> slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [](char c) { return static_cast<std::byte>(c); });
  return out;
}

std::multiset<std::uint64_t> ids(const TraceSet& s) {
  std::multiset<std::uint64_t> out;
  for (const auto& r : s.records) out.insert(r.example_id);
  return out;
}

}  // namespace

TEST_SUITE("trace_store") {
  TEST_CASE("empty set round-trips") {
    TempDir dir("empty");
    TraceSet s;
    s.header.model_id = "m";
    s.header.dataset_id = "d";
    s.header.num_layers = 2;
    s.header.hidden_dim = 4;
    const auto path = dir.path / "e.ccbt";
    write_trace(s, path);
    CHECK(read_trace(path) == s);
    // preamble 12 + header + footer 8
    CHECK(std::filesystem::file_size(path) > 20);
  }

  TEST_CASE("round-trip identity on random sets") {
    TempDir dir("rt");
    Rng rng(123);
    for (int k = 0; k < 25; ++k) {
      const auto s = ccbtest::random_trace(rng, rng.below(20), 1 + static_cast<int>(rng.below(4)),
                                           1 + static_cast<int>(rng.below(6)));
      const auto path = dir.path / "r.ccbt";
      write_trace(s, path);
      CHECK(read_trace(path) == s);
      CHECK(decode_trace(encode_trace(s)) == s);
    }
  }

  TEST_CASE("byte layout") {
    Rng rng(5);
    const auto s = ccbtest::random_trace(rng, 3, 2, 3);
    const auto bytes = encode_trace(s);
    CHECK(std::memcmp(bytes.data(), "CCBT", 4) == 0);
    CHECK(std::memcmp(bytes.data() + bytes.size() - 4, "TBCC", 4) == 0);
    std::uint32_t version, header_len;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&header_len, bytes.data() + 8, 4);
    CHECK(version == 1);
    const std::string header(reinterpret_cast<const char*>(bytes.data() + 12), header_len);
    const auto j = nlohmann::json::parse(header);
    CHECK(j.size() == 8);
    for (const char* key : {"format_version", "model_id", "dataset_id", "num_layers", "hidden_dim", "extraction_mode",
                            "stored_temperature", "record_count"}) {
      CHECK(j.contains(key));
    }
    CHECK(bytes.size() == 12 + header_len + 3 * (8 + 1 + 4 + 4 + 2 * 3 * 4) + 8);
    // first record starts right after the header
    std::uint64_t id;
    std::memcpy(&id, bytes.data() + 12 + header_len, 8);
    CHECK(id == s.records[0].example_id);
    float v;
    std::memcpy(&v, bytes.data() + 12 + header_len + 17 + 4 * 4, 4);
    CHECK(v == s.hidden(0, 1)[1]);
  }

  TEST_CASE("every single-byte flip is detected") {
    Rng rng(77);
    const auto s = ccbtest::random_trace(rng, 3, 2, 2);
    const auto bytes = encode_trace(s);
    const std::size_t checked = bytes.size() - 8;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      for (std::byte mask : {std::byte{0x01}, std::byte{0x80}, std::byte{0xff}}) {
        auto bad = bytes;
        bad[i] ^= mask;
        if (i >= 4 && i < checked) {
          CHECK_THROWS_AS(decode_trace(bad), CorruptionError);
        } else {
          CHECK_THROWS_AS(decode_trace(bad), Error);
        }
      }
    }
  }

  TEST_CASE("bad magic is a format error") {
    Rng rng(1);
    auto bytes = encode_trace(ccbtest::random_trace(rng, 2, 1, 1));
    std::memcpy(bytes.data(), "XXXX", 4);
    CHECK_THROWS_AS(decode_trace(bytes), FormatError);
    CHECK_THROWS_AS(decode_trace(std::span<const std::byte>(bytes.data(), 3)), FormatError);
  }

  TEST_CASE("truncations never pass") {
    Rng rng(2);
    const auto bytes = encode_trace(ccbtest::random_trace(rng, 3, 2, 2));
    for (std::size_t n = 0; n < bytes.size(); ++n) {
      CHECK_THROWS_AS(decode_trace(std::span<const std::byte>(bytes.data(), n)), Error);
    }
  }

  TEST_CASE("invalid sets are rejected before writing") {
    TempDir dir("inv");
    Rng rng(3);
    auto s = ccbtest::random_trace(rng, 2, 2, 2);
    const auto path = dir.path / "x.ccbt";
    SUBCASE("label") { s.records[0].label = 2; }
    SUBCASE("probability") { s.records[1].p_semantic_t = 1.5f; }
    SUBCASE("nan hidden") { s.records[1].hidden[0] = std::nanf(""); }
    SUBCASE("count") { s.header.record_count = 5; }
    SUBCASE("shape") { s.records[0].hidden.pop_back(); }
    SUBCASE("temperature") { s.header.stored_temperature = 0.0; }
    SUBCASE("layers") { s.header.num_layers = 0; }
    CHECK_THROWS_AS(write_trace(s, path), ValidationError);
    CHECK_FALSE(std::filesystem::exists(path));
  }

  TEST_CASE("unwritable destination is an I/O error") {
    Rng rng(4);
    const auto s = ccbtest::random_trace(rng, 1, 1, 1);
    CHECK_THROWS_AS(write_trace(s, "/nonexistent_dir_ccb/x.ccbt"), IoError);
    CHECK_THROWS_AS(read_trace("/nonexistent_dir_ccb/x.ccbt"), IoError);
  }

  TEST_CASE("killed writer leaves no file or the prior file") {
    TempDir dir("kill");
    Rng rng(9);
    const auto prior = ccbtest::random_trace(rng, 2, 2, 2);
    const auto next = ccbtest::random_trace(rng, 3, 2, 2);
    const auto size = encode_trace(next).size();
    const auto fresh = dir.path / "fresh.ccbt";
    const auto existing = dir.path / "existing.ccbt";
    write_trace(prior, existing);
    for (std::size_t cut = 0; cut <= size; ++cut) {
      const auto t1 = detail::write_trace_crashing(next, fresh, cut);
      const auto t2 = detail::write_trace_crashing(next, existing, cut);
      CHECK_FALSE(std::filesystem::exists(fresh));
      CHECK(read_trace(existing) == prior);
      if (cut < size) {
        CHECK_THROWS_AS(read_trace(t1), Error);
      }
      std::filesystem::remove(t1);
      std::filesystem::remove(t2);
    }
    write_trace(next, existing);
    CHECK(read_trace(existing) == next);
    for (const auto& entry : std::filesystem::directory_iterator(dir.path)) {
      CHECK(entry.path().filename() == "existing.ccbt");
    }
  }

  TEST_CASE("balance 60/40 gives 40/40") {
    const auto s = ccbtest::labelled_trace(60, 40, 1);
    const auto b = balance_classes(s, 42);
    CHECK(b.size() == 80);
    CHECK(b.count_label(1) == 40);
    CHECK(b.count_label(0) == 40);
    CHECK(b.header.record_count == 80);
  }

  TEST_CASE("balance fixed point") {
    const auto s = ccbtest::labelled_trace(30, 30, 2);
    CHECK(balance_classes(s, 7) == s);
  }

  TEST_CASE("balance keeps relative order and is a sub-multiset") {
    auto s = ccbtest::labelled_trace(50, 13, 3);
    Rng rng(1);
    rng.shuffle(std::span<TraceRecord>(s.records));
    const auto b = balance_classes(s, 11);
    std::size_t cursor = 0;
    for (const auto& r : b.records) {
      while (cursor < s.size() && !(s.records[cursor] == r)) ++cursor;
      REQUIRE(cursor < s.size());
      ++cursor;
    }
  }

  TEST_CASE("balance determinism and seed sensitivity") {
    const auto s = ccbtest::labelled_trace(100, 10, 4);
    CHECK(balance_classes(s, 5) == balance_classes(s, 5));
    std::set<std::multiset<std::uint64_t>> subsets;
    for (std::uint64_t seed = 0; seed < 10; ++seed) subsets.insert(ids(balance_classes(s, seed)));
    CHECK(subsets.size() > 5);
  }

  TEST_CASE("balance needs both classes") {
    CHECK_THROWS_AS(balance_classes(ccbtest::labelled_trace(5, 0, 1), 1), DegenerateInputError);
    CHECK_THROWS_AS(balance_classes(ccbtest::labelled_trace(0, 5, 1), 1), DegenerateInputError);
  }

  TEST_CASE("balance property over random ratios") {
    Rng rng(99);
    for (int k = 0; k < 100; ++k) {
      const auto pos = 1 + rng.below(60);
      const auto neg = 1 + rng.below(60);
      const auto b = balance_classes(ccbtest::labelled_trace(pos, neg, k), rng.next_u64());
      REQUIRE(b.count_label(1) == std::min(pos, neg));
      REQUIRE(b.count_label(0) == std::min(pos, neg));
    }
  }

  TEST_CASE("stratified split arithmetic and partition") {
    const auto s = ccbtest::labelled_trace(50, 50, 5);
    const auto [tr, va, te] = stratified_split(s, {0.6, 0.2, 0.2}, 42);
    CHECK(tr.size() == 60);
    CHECK(va.size() == 20);
    CHECK(te.size() == 20);
    CHECK(tr.count_label(1) == 30);
    CHECK(va.count_label(1) == 10);
    CHECK(te.count_label(1) == 10);
    std::multiset<std::uint64_t> all = ids(tr);
    for (auto id : ids(va)) all.insert(id);
    for (auto id : ids(te)) all.insert(id);
    CHECK(all == ids(s));
    const auto [tr2, va2, te2] = stratified_split(s, {0.6, 0.2, 0.2}, 42);
    CHECK(tr == tr2);
    CHECK(va == va2);
    CHECK(te == te2);
    validate(tr);
  }

  TEST_CASE("stratified split errors") {
    CHECK_THROWS_AS(stratified_split(ccbtest::labelled_trace(2, 10, 1), {0.6, 0.2, 0.2}, 1), DegenerateInputError);
    CHECK_THROWS_AS(stratified_split(ccbtest::labelled_trace(10, 10, 1), {0.6, 0.4, 0.0}, 1), ValidationError);
    CHECK_THROWS_AS(stratified_split(ccbtest::labelled_trace(10, 10, 1), {0.6, 0.2, 0.3}, 1), ValidationError);
  }
}
