#include <doctest.h>

#include <fstream>
#include <random>
#include <sys/wait.h>
#include <unistd.h>

#include "flowvault/store.hpp"
#include "support/builders.hpp"
#include "support/tempdir.hpp"

using namespace flowvault;
using fvtest::TempDir;

namespace {

ArchiveConfig small_config(const TempDir& d) {
  ArchiveConfig c;
  c.fast_dir = d.sub("fast");
  c.bulk_dir = d.sub("bulk");
  return c;
}

// One flow per call, with its payload chunks stored through `a`.
SealedFlow store_flow(Archive& a, const Flow& f, uint64_t epoch) {
  a.set_writer_epoch(epoch);
  CompressedHeaderBlock b = compress_headers(f);
  PayloadStream ps = assemble_payload_stream(f);
  for (const auto& c : prepare_chunks(ps.bytes, chunk_stream(ps.bytes, ChunkingConfig::cdc(4096)), true)) {
    ChunkLocation loc = a.append_chunk(c.record);
    a.note_reference(loc, epoch);
    b.chunk_refs.push_back({loc, c.raw_len});
  }
  SealedFlow s;
  s.block = b.serialize();
  s.key = f.key;
  s.packets = static_cast<uint32_t>(f.packets.size());
  s.first_ts = f.first_ts;
  s.last_ts = f.last_ts;
  return s;
}

Flow flow_with(uint32_t src, uint16_t sport, size_t n, uint32_t seed, Micros t0) {
  std::mt19937_64 rng(seed);
  fvtest::Frame fr;
  fr.src = src;
  fr.sport = sport;
  std::vector<std::pair<Micros, Bytes>> frames;
  for (size_t i = 0; i < n; ++i) {
    fr.payload = fvtest::random_bytes(rng, 200 + rng() % 1200);
    frames.emplace_back(t0 + i * 1000, fvtest::build(fr));
    fr.seq += static_cast<uint32_t>(fr.payload.size());
    fr.ip_id++;
  }
  return fvtest::make_flow(frames);
}

}  // namespace

TEST_CASE("archive seals an epoch and reopens it") {
  TempDir d;
  ArchiveConfig cfg = small_config(d);
  std::vector<SealedFlow> flows;
  std::vector<Flow> src;
  {
    auto a = Archive::create(cfg);
    for (uint32_t i = 0; i < 20; ++i) {
      src.push_back(flow_with(0x0a000100 + i, uint16_t(2000 + i), 1 + i % 7, i, 1000 + i));
      flows.push_back(store_flow(*a, src.back(), 0));
    }
    EpochInfo e = a->seal_epoch(0, flows);
    CHECK(e.flows == 20);
    CHECK(e.base == 0);
    a->finish({});
  }
  auto a = Archive::open(cfg.fast_dir);
  REQUIRE(a->epochs().size() == 1);
  std::vector<FlowLocation> locs;
  size_t i = 0;
  a->scan_epoch(0, [&](FlowLocation loc, ByteView block) {
    CHECK(Bytes(block.begin(), block.end()) == flows[i].block);
    CHECK(a->read_header_block(loc) == flows[i].block);
    locs.push_back(loc);
    ++i;
  });
  CHECK(i == 20);
  // Every flow is found through both indexes and its payload reassembles.
  for (size_t k = 0; k < src.size(); ++k) {
    auto by_ip = a->index(0, IndexField::kIpAddr)->lookup_ip(src[k].key.src_ip);
    auto by_port = a->index(0, IndexField::kPort)->lookup_port(src[k].key.src_port);
    CHECK(std::find(by_ip.begin(), by_ip.end(), locs[k].offset) != by_ip.end());
    CHECK(std::find(by_port.begin(), by_port.end(), locs[k].offset) != by_port.end());
    CompressedHeaderBlock b = CompressedHeaderBlock::parse(a->read_header_block(locs[k]));
    auto hdrs = decompress_headers(b);
    std::vector<uint32_t> lens;
    for (const auto& h : hdrs) lens.push_back(static_cast<uint32_t>(h.payload_len));
    auto payloads = read_and_reassemble(b.chunk_refs, lens, *a);
    for (size_t p = 0; p < hdrs.size(); ++p) {
      Bytes whole = hdrs[p].header;
      whole.insert(whole.end(), payloads[p].begin(), payloads[p].end());
      CHECK(whole == src[k].packets[p].packet.data);
    }
  }
}

TEST_CASE("create refuses an existing archive") {
  TempDir d;
  ArchiveConfig cfg = small_config(d);
  Archive::create(cfg)->finish({});
  CHECK_THROWS_AS(Archive::create(cfg), UsageError);
  CHECK_THROWS_AS(Archive::open(d.sub("nothing")), UsageError);
}

TEST_CASE("epochs seal in increasing order only") {
  TempDir d;
  auto a = Archive::create(small_config(d));
  Flow f = flow_with(0x0a000001, 1000, 2, 1, 0);
  a->seal_epoch(3, {store_flow(*a, f, 3)});
  CHECK_THROWS_AS(a->seal_epoch(3, {store_flow(*a, f, 3)}), UsageError);
  CHECK_THROWS_AS(a->seal_epoch(2, {store_flow(*a, f, 2)}), UsageError);
  CHECK_THROWS_AS(a->seal_epoch(4, {}), UsageError);
}

TEST_CASE("chunk reads past the end or into missing segments are unavailable") {
  TempDir d;
  auto a = Archive::create(small_config(d));
  ChunkLocation loc = a->append_chunk(encode_chunk_record(Bytes(100, 7)));
  a->finish({});
  CHECK(decode_chunk_record(a->read_chunk(loc)) == Bytes(100, 7));
  CHECK_THROWS_AS(a->read_chunk({loc.segment_id, loc.offset + 5000}), DataUnavailable);
  CHECK_THROWS_AS(a->read_chunk({loc.segment_id + 9, loc.offset}), DataUnavailable);
  CHECK_THROWS_AS(a->read_header_block({12345}), DataUnavailable);
}

TEST_CASE("ten thousand random chunk records survive rotation") {
  TempDir d;
  ArchiveConfig cfg = small_config(d);
  cfg.segment_max_bytes = 256 * 1024;
  std::mt19937_64 rng(42);
  std::vector<std::pair<ChunkLocation, Bytes>> written;
  {
    auto a = Archive::create(cfg);
    for (int i = 0; i < 10000; ++i) {
      Bytes raw = fvtest::random_bytes(rng, 1 + rng() % 300);
      if (i % 3 == 0) raw.assign(raw.size(), uint8_t(i));
      written.emplace_back(a->append_chunk(encode_chunk_record(raw, i % 2 == 0)), raw);
    }
    a->finish({});
  }
  auto a = Archive::open(cfg.fast_dir);
  CHECK(a->segments().size() > 3);
  for (const auto& [loc, raw] : written) REQUIRE(decode_chunk_record(a->read_chunk(loc)) == raw);
}

TEST_CASE("a corrupted header frame fails its checksum") {
  TempDir d;
  ArchiveConfig cfg = small_config(d);
  {
    auto a = Archive::create(cfg);
    a->seal_epoch(0, {store_flow(*a, flow_with(0x0a000001, 1000, 5, 1, 0), 0)});
    a->finish({});
  }
  auto a0 = Archive::open(cfg.fast_dir);
  const std::string log = a0->header_log_path(0);
  a0.reset();
  {
    std::fstream f(log, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(kFileHeaderSize + 10);
    char c = 0x5a;
    f.write(&c, 1);
  }
  auto a = Archive::open(cfg.fast_dir);
  CHECK_THROWS_AS(a->read_header_block({0}), IntegrityError);
}

TEST_CASE("eviction: none, horizon and epoch-only") {
  TempDir d;
  ArchiveConfig cfg = small_config(d);
  // Epoch 0 writes a chunk; epoch 2 references it again through dedup.
  ChunkLocation shared;
  {
    auto a = Archive::create(cfg);
    Flow f0 = flow_with(0x0a000001, 1000, 3, 7, 0);
    SealedFlow s0 = store_flow(*a, f0, 0);
    shared = CompressedHeaderBlock::parse(s0.block).chunk_refs.front().location;
    a->seal_epoch(0, {s0});
    a->seal_epoch(1, {store_flow(*a, flow_with(0x0a000002, 1001, 3, 8, 60'000'000), 1)});
    a->set_writer_epoch(2);
    a->note_reference(shared, 2);
    a->seal_epoch(2, {store_flow(*a, flow_with(0x0a000003, 1002, 3, 9, 120'000'000), 2)});
    a->finish({});
  }
  auto a = Archive::open(cfg.fast_dir);
  auto r0 = a->evict_oldest(0);
  CHECK(r0.epochs_removed == 0);
  CHECK(r0.segments_removed == 0);

  auto r1 = a->evict_oldest(1, EvictionPolicy::kHorizon);
  CHECK(r1.epochs_removed == 1);
  CHECK(a->epochs().front().id == 1);
  // Segment of epoch 0 is still referenced by epoch 2.
  CHECK(r1.segments_removed == 0);
  CHECK_NOTHROW(a->read_chunk(shared));

  auto r2 = a->evict_oldest(2, EvictionPolicy::kEpochOnly);
  CHECK(r2.epochs_removed == 1);
  CHECK(r2.segments_removed >= 1);
  CHECK_THROWS_AS(a->read_chunk(shared), DataUnavailable);

  // The manifest was rewritten: a fresh open sees the same state.
  auto b = Archive::open(cfg.fast_dir);
  REQUIRE(b->epochs().size() == 1);
  CHECK(b->epochs().front().id == 2);
  CHECK(b->totals().epochs_evicted == 2);
  CHECK_THROWS_AS(b->read_chunk(shared), DataUnavailable);

  auto r3 = b->evict_oldest(100);
  CHECK(r3.epochs_removed == 1);
  CHECK(b->epochs().empty());
  CHECK(b->segments().empty());
}

TEST_CASE("usage splits bytes across tiers") {
  TempDir d;
  ArchiveConfig cfg = small_config(d);
  auto a = Archive::create(cfg);
  a->seal_epoch(0, {store_flow(*a, flow_with(0x0a000001, 1000, 8, 3, 0), 0)});
  a->finish({});
  TierUsage u = a->usage();
  CHECK(u.fast_bytes > 0);
  CHECK(u.bulk_bytes > 8 * 200);
}

TEST_CASE("a crash mid-seal leaves the previous state readable") {
  for (uint64_t ops = 1; ops <= 12; ++ops) {
    TempDir d;
    ArchiveConfig cfg = small_config(d);
    pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      auto a = Archive::create(cfg);
      a->seal_epoch(0, {store_flow(*a, flow_with(0x0a000001, 1000, 4, 1, 0), 0)});
      set_crash_after_io_ops(ops, ops % 2 == 0);
      a->seal_epoch(1, {store_flow(*a, flow_with(0x0a000002, 1000, 4, 2, 60'000'000), 1)});
      a->finish({});
      _exit(0);
    }
    int status = 0;
    waitpid(pid, &status, 0);
    REQUIRE(WIFEXITED(status));
    const int code = WEXITSTATUS(status);
    CHECK((code == 77 || code == 0));
    auto a = Archive::open(cfg.fast_dir);
    auto eps = a->epochs();
    REQUIRE(!eps.empty());
    CHECK(eps.front().id == 0);
    if (code == 77) CHECK(eps.size() <= 2);
    for (const auto& e : eps) {
      size_t n = 0;
      a->scan_epoch(e.id, [&](FlowLocation loc, ByteView) {
        CompressedHeaderBlock b = CompressedHeaderBlock::parse(a->read_header_block(loc));
        CHECK_NOTHROW(decompress_headers(b));
        for (const auto& r : b.chunk_refs) CHECK_NOTHROW(a->read_chunk(r.location));
        ++n;
      });
      CHECK(n == e.flows);
    }
  }
}
