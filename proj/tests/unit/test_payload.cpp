#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "flowvault/payload_codec.hpp"
#include "support/builders.hpp"

using namespace flowvault;

namespace {

std::vector<size_t> cut_points(const std::vector<ChunkSpan>& spans) {
  std::vector<size_t> v;
  for (const auto& s : spans) v.push_back(s.offset + s.len);
  return v;
}

void check_tiles(const std::vector<ChunkSpan>& spans, size_t n) {
  size_t at = 0;
  for (const auto& s : spans) {
    CHECK(s.offset == at);
    CHECK(s.len > 0);
    at += s.len;
  }
  CHECK(at == n);
}

}  // namespace

TEST_CASE("rabin fingerprint frozen values") {
  // from tests/oracles/reference_values.py
  Bytes a(48);
  for (int i = 0; i < 48; ++i) a[i] = static_cast<uint8_t>(i);
  CHECK(RabinWindow::fingerprint(a) == 0x518d4f9890dc0363ULL);
  std::string fox = "The quick brown fox jumps over the lazy dog";
  CHECK(RabinWindow::fingerprint(ByteView(reinterpret_cast<const uint8_t*>(fox.data()), fox.size())) ==
        0x615c2d8dc5097c89ULL);

  Bytes pattern(200);
  for (int i = 0; i < 200; ++i) pattern[i] = static_cast<uint8_t>((i * 37 + 11) & 0xff);
  RabinWindow w(48);
  for (uint8_t b : pattern) w.slide(b);
  CHECK(w.value() == 0x507d214be18758a5ULL);
}

TEST_CASE("windowed fingerprint equals whole-window fingerprint") {
  std::mt19937_64 rng(5);
  Bytes s = fvtest::random_bytes(rng, 5000);
  RabinWindow w(48);
  for (size_t i = 0; i < s.size(); ++i) {
    uint64_t v = w.slide(s[i]);
    if (i % 97 == 0 || i + 1 == s.size()) {
      size_t from = i + 1 >= 48 ? i + 1 - 48 : 0;
      CHECK(v == RabinWindow::fingerprint(ByteView(s).subspan(from, i + 1 - from)));
    }
  }
}

TEST_CASE("fixed chunking arithmetic") {
  Bytes s(2500, 1);
  auto spans = chunk_stream(s, ChunkingConfig::fixed(1024));
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].len == 1024);
  CHECK(spans[1].len == 1024);
  CHECK(spans[2].len == 452);
  CHECK(chunk_stream({}, ChunkingConfig::cdc(4096)).empty());
  auto none = chunk_stream(s, ChunkingConfig::none());
  REQUIRE(none.size() == 1);
  CHECK(none[0].len == 2500);
}

TEST_CASE("cdc zero stream hits max clamp") {
  Bytes z(1 << 20, 0);
  auto cfg = ChunkingConfig::cdc(4096);
  auto spans = chunk_stream(z, cfg);
  check_tiles(spans, z.size());
  for (size_t i = 0; i + 1 < spans.size(); ++i) CHECK(spans[i].len == cfg.max_size);
}

TEST_CASE("cdc respects min and max and survives a front insertion") {
  std::mt19937_64 rng(8);
  auto cfg = ChunkingConfig::cdc(4096);
  Bytes s = fvtest::random_bytes(rng, 64 * 1024);
  auto a = chunk_stream(s, cfg);
  check_tiles(a, s.size());
  for (size_t i = 0; i + 1 < a.size(); ++i) {
    CHECK(a[i].len >= cfg.min_size);
    CHECK(a[i].len <= cfg.max_size);
  }
  Bytes t = s;
  t.insert(t.begin(), 0x5a);
  auto b = chunk_stream(t, cfg);
  std::set<size_t> bset;
  for (size_t c : cut_points(b)) bset.insert(c - 1);
  auto acuts = cut_points(a);
  // Boundaries after the first chunk, located relative to content.
  size_t kept = 0, total = 0;
  for (size_t i = 1; i < acuts.size(); ++i) {
    ++total;
    kept += bset.count(acuts[i]);
  }
  REQUIRE(total > 5);
  CHECK(kept * 10 >= total * 9);
}

TEST_CASE("chunking config parsing") {
  CHECK(ChunkingConfig::parse("cdc:4096") == ChunkingConfig::cdc(4096));
  CHECK(ChunkingConfig::parse("fixed:1024") == ChunkingConfig::fixed(1024));
  CHECK(ChunkingConfig::parse("none") == ChunkingConfig::none());
  CHECK_THROWS_AS(ChunkingConfig::parse("cdc:1000"), UsageError);
  CHECK_THROWS_AS(ChunkingConfig::parse("zip:4"), UsageError);
  CHECK_THROWS_AS(ChunkingConfig::parse("fixed:"), UsageError);
}

TEST_CASE("sha1 standard vector") {
  std::string abc = "abc";
  CHECK(to_hex(sha1(ByteView(reinterpret_cast<const uint8_t*>(abc.data()), 3))) ==
        "a9993e364706816aba3e25717850c26c9cd0d89d");
}

TEST_CASE("payload stream assembly") {
  fvtest::Frame f;
  f.proto = 17;
  f.payload = {'a', 'b'};
  Bytes p1 = fvtest::build(f);
  f.payload = {};
  Bytes p2 = fvtest::build(f);
  f.payload = {'c', 'd'};
  Bytes p3 = fvtest::build(f);
  Flow flow = fvtest::make_flow({{1, p1}, {2, p2}, {3, p3}});
  PayloadStream s = assemble_payload_stream(flow);
  CHECK(s.bytes == Bytes{'a', 'b', 'c', 'd'});
  CHECK(s.lengths == std::vector<uint32_t>{2, 0, 2});

  MemoryChunkStore store;
  auto refs = read_and_reassemble({}, {0, 0}, store);
  CHECK(refs == std::vector<Bytes>{{}, {}});
}

TEST_CASE("identical chunks in one flow are stored once") {
  std::mt19937_64 rng(2);
  Bytes chunk = fvtest::random_bytes(rng, 4096);
  Bytes stream = chunk;
  stream.insert(stream.end(), chunk.begin(), chunk.end());
  auto chunks = prepare_chunks(stream, chunk_stream(stream, ChunkingConfig::fixed(4096)));
  MemoryChunkIndex idx(10 * kMicrosPerSecond);
  MemoryChunkStore store;
  DedupStats st;
  auto refs = dedup_and_store(chunks, idx, store, 0, &st);
  REQUIRE(refs.size() == 2);
  CHECK(refs[0].location == refs[1].location);
  CHECK(store.count() == 1);
  CHECK(st.hits == 1);
  CHECK(st.duplicate_bytes == 4096);
  auto back = read_and_reassemble(refs, {8192}, store);
  CHECK(back[0] == stream);
}

TEST_CASE("window expiry semantics") {
  ChunkHash h{};
  h[0] = 1;
  MemoryChunkIndex idx(10'000 * kMicrosPerSecond);
  idx.put(h, {0, 5}, 0);
  idx.expire(10'000 * kMicrosPerSecond);
  CHECK(idx.get(h).has_value());
  idx.expire(10'001 * kMicrosPerSecond);
  CHECK_FALSE(idx.get(h).has_value());

  MemoryChunkIndex off(0);
  off.put(h, {0, 1}, 0);
  CHECK_FALSE(off.get(h).has_value());
}

TEST_CASE("resend after the window is stored twice") {
  std::mt19937_64 rng(4);
  Bytes s = fvtest::random_bytes(rng, 3000);
  auto chunks = prepare_chunks(s, chunk_stream(s, ChunkingConfig::cdc(1024)));
  MemoryChunkIndex idx(10 * kMicrosPerSecond);
  MemoryChunkStore store;
  dedup_and_store(chunks, idx, store, 0);
  size_t first = store.count();
  idx.expire(11 * kMicrosPerSecond);
  dedup_and_store(chunks, idx, store, 11 * kMicrosPerSecond);
  CHECK(store.count() == 2 * first);
}

TEST_CASE("random insert and expire sequence matches a brute-force map") {
  std::mt19937_64 rng(6);
  const Micros window = 50;
  MemoryChunkIndex idx(window);
  std::map<ChunkHash, std::pair<ChunkLocation, Micros>> oracle;
  Micros now = 0;
  for (int i = 0; i < 20000; ++i) {
    now += rng() % 3;
    ChunkHash h{};
    h[0] = static_cast<uint8_t>(rng() % 200);
    switch (rng() % 3) {
      case 0: {
        ChunkLocation loc{0, static_cast<uint64_t>(i)};
        idx.put(h, loc, now);
        oracle[h] = {loc, now};
        break;
      }
      case 1: {
        idx.expire(now);
        if (now >= window)
          std::erase_if(oracle, [&](const auto& kv) { return kv.second.second < now - window; });
        break;
      }
      default: {
        auto got = idx.get(h);
        auto it = oracle.find(h);
        REQUIRE(got.has_value() == (it != oracle.end()));
        if (got) CHECK(*got == it->second.first);
      }
    }
    REQUIRE(idx.size() == oracle.size());
  }
}

TEST_CASE("duplicated corpus stores unique content only") {
  std::mt19937_64 rng(12);
  auto cfg = ChunkingConfig::cdc(1024);
  std::vector<Bytes> pool;
  for (int i = 0; i < 40; ++i) pool.push_back(fvtest::random_bytes(rng, 2000 + rng() % 6000));
  MemoryChunkIndex idx(1'000'000);
  MemoryChunkStore store;
  DedupStats st;
  std::set<ChunkHash> distinct;
  uint64_t distinct_bytes = 0;
  for (int flow = 0; flow < 200; ++flow) {
    Bytes s = rng() % 10 < 3 ? pool[rng() % pool.size()] : fvtest::random_bytes(rng, 4000);
    auto chunks = prepare_chunks(s, chunk_stream(s, cfg));
    for (const auto& c : chunks)
      if (distinct.insert(c.hash).second) distinct_bytes += c.raw_len;
    dedup_and_store(chunks, idx, store, flow, &st);
  }
  CHECK(st.stored_raw_bytes == distinct_bytes);
  CHECK(st.hits > 0);
}

TEST_CASE("random flows round trip under all chunking modes") {
  std::mt19937_64 rng(13);
  const ChunkingConfig modes[] = {ChunkingConfig::cdc(256), ChunkingConfig::fixed(300),
                                  ChunkingConfig::none()};
  MemoryChunkIndex idx(1'000'000);
  MemoryChunkStore store;
  for (int i = 0; i < 1000; ++i) {
    std::vector<uint32_t> lengths;
    Bytes stream;
    std::vector<Bytes> expect;
    const size_t n = 1 + rng() % 8;
    for (size_t k = 0; k < n; ++k) {
      // small alphabet so dedup hits happen
      Bytes p(rng() % 600);
      for (auto& b : p) b = static_cast<uint8_t>(rng() % 3);
      lengths.push_back(static_cast<uint32_t>(p.size()));
      stream.insert(stream.end(), p.begin(), p.end());
      expect.push_back(p);
    }
    const auto& cfg = modes[i % 3];
    auto refs = dedup_and_store(prepare_chunks(stream, chunk_stream(stream, cfg)), idx, store, i);
    CHECK(read_and_reassemble(refs, lengths, store) == expect);
  }
}

TEST_CASE("missing chunk reports data unavailable with its location") {
  MemoryChunkStore store;
  Bytes s(100, 9);
  MemoryChunkIndex idx(0);
  auto refs = dedup_and_store(prepare_chunks(s, chunk_stream(s, ChunkingConfig::none())), idx,
                              store, 0);
  store.drop(refs[0].location);
  try {
    read_and_reassemble(refs, {100}, store);
    FAIL("expected DataUnavailable");
  } catch (const DataUnavailable& e) {
    CHECK(std::string(e.what()).find(refs[0].location.str()) != std::string::npos);
  }
}

TEST_CASE("chunk record codec") {
  Bytes z(5000, 0);
  Bytes rec = encode_chunk_record(z);
  CHECK(rec[0] == kChunkRecordMagic);
  CHECK(rec.size() < 200);
  CHECK(chunk_record_size(rec) == rec.size());
  CHECK(decode_chunk_record(rec) == z);
  std::mt19937_64 rng(1);
  Bytes r = fvtest::random_bytes(rng, 500);
  Bytes rr = encode_chunk_record(r);
  CHECK(rr.size() <= r.size() + 8);  // stored escape
  CHECK(decode_chunk_record(rr) == r);
  rr[0] ^= 1;
  CHECK_THROWS_AS(decode_chunk_record(rr), IntegrityError);
}
