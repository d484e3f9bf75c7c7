#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "flowvault/chunking.hpp"
#include "flowvault/compressor.hpp"
#include "flowvault/flow_grouper.hpp"
#include "flowvault/locations.hpp"

namespace flowvault {

using ChunkHash = std::array<uint8_t, 20>;

ChunkHash sha1(ByteView data);
std::string to_hex(const ChunkHash& h);

struct ChunkHashHasher {
  size_t operator()(const ChunkHash& h) const noexcept {
    size_t v;
    std::memcpy(&v, h.data(), sizeof v);
    return v;
  }
};

struct ChunkDescriptor {
  ChunkHash hash{};
  ChunkLocation location;
  uint32_t raw_len = 0;
  uint32_t compressed_len = 0;
};

// Bulk-tier chunk record: magic, raw_len varint, compressed_len varint,
// compressor id byte, payload bytes.
inline constexpr uint8_t kChunkRecordMagic = 0xC7;
Bytes encode_chunk_record(ByteView raw, bool compress = true);
Bytes decode_chunk_record(ByteView record);
// Size of the whole record given at least its first 12 bytes; throws
// IntegrityError if the prefix is not a chunk record.
size_t chunk_record_size(ByteView prefix);

// Where dedup_and_store writes unique chunks and read_and_reassemble reads
// them back. Implemented by the archive and by MemoryChunkStore.
class ChunkStore {
 public:
  virtual ~ChunkStore() = default;
  virtual ChunkLocation append_chunk(ByteView record) = 0;
  // Throws DataUnavailable if the location is gone.
  virtual Bytes read_chunk(ChunkLocation loc) const = 0;
};

class MemoryChunkStore : public ChunkStore {
 public:
  ChunkLocation append_chunk(ByteView record) override;
  Bytes read_chunk(ChunkLocation loc) const override;
  void drop(ChunkLocation loc) { records_.erase(loc.offset); }
  uint64_t bytes() const { return bytes_; }
  size_t count() const { return records_.size(); }

 private:
  std::map<uint64_t, Bytes> records_;
  uint64_t bytes_ = 0;
};

// Chunk index contract: get/put/expire keyed by chunk hash, with a
// trace-time deduplication window. A window of 0 disables deduplication.
class ChunkIndex {
 public:
  virtual ~ChunkIndex() = default;
  virtual std::optional<ChunkLocation> get(const ChunkHash& h) const = 0;
  virtual void put(const ChunkHash& h, ChunkLocation loc, Micros inserted) = 0;
  // Removes every entry with insertion_time < now - window.
  virtual void expire(Micros now) = 0;
  virtual size_t size() const = 0;
  virtual Micros window() const = 0;
};

// In-memory index with expiry buckets keyed by insertion time.
class MemoryChunkIndex : public ChunkIndex {
 public:
  explicit MemoryChunkIndex(Micros window) : window_(window) {}

  std::optional<ChunkLocation> get(const ChunkHash& h) const override;
  void put(const ChunkHash& h, ChunkLocation loc, Micros inserted) override;
  void expire(Micros now) override;
  size_t size() const override { return entries_.size(); }
  Micros window() const override { return window_; }
  size_t peak_size() const { return peak_; }

 private:
  struct Entry {
    ChunkLocation loc;
    Micros inserted;
  };
  Micros window_;
  std::unordered_map<ChunkHash, Entry, ChunkHashHasher> entries_;
  std::map<Micros, std::vector<ChunkHash>> by_time_;
  size_t peak_ = 0;
};

struct PayloadStream {
  Bytes bytes;
  std::vector<uint32_t> lengths;  // per packet, flow order
};

PayloadStream assemble_payload_stream(const Flow& flow);

// A chunk after hashing and per-chunk compression, ready for dedup.
struct PreparedChunk {
  ChunkHash hash{};
  uint32_t raw_len = 0;
  Bytes record;
};

std::vector<PreparedChunk> prepare_chunks(ByteView stream, const std::vector<ChunkSpan>& spans,
                                          bool compress = true);

struct DedupStats {
  uint64_t chunks = 0;
  uint64_t hits = 0;
  uint64_t raw_bytes = 0;         // all chunks
  uint64_t duplicate_bytes = 0;   // raw bytes of hit chunks
  uint64_t stored_raw_bytes = 0;  // raw bytes of newly stored chunks
  uint64_t stored_bytes = 0;      // record bytes appended to the bulk tier

  DedupStats& operator+=(const DedupStats& o);
};

// For each chunk: index hit -> reference existing location; miss -> append
// record and insert with insertion_time = now. Refs come back in chunk order.
std::vector<ChunkRef> dedup_and_store(const std::vector<PreparedChunk>& chunks, ChunkIndex& index,
                                      ChunkStore& store, Micros now, DedupStats* stats = nullptr);

void expire_chunk_index(ChunkIndex& index, Micros now);

// Reads, decompresses and concatenates the referenced chunks, then splits
// the stream per packet. Missing chunks raise DataUnavailable.
std::vector<Bytes> read_and_reassemble(const std::vector<ChunkRef>& refs,
                                       const std::vector<uint32_t>& lengths,
                                       const ChunkStore& store);

}  // namespace flowvault
