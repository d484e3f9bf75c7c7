#include "flowvault/payload_codec.hpp"

#include <openssl/evp.h>

#include <cstring>

namespace flowvault {

ChunkHash sha1(ByteView data) {
  ChunkHash out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha1(), nullptr) != 1 ||
      len != out.size())
    throw Error("SHA-1 digest failed");
  return out;
}

std::string to_hex(const ChunkHash& h) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (uint8_t b : h) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

Bytes encode_chunk_record(ByteView raw, bool compress) {
  PackedBlock packed = pack_block(raw, compress);
  ByteWriter w;
  w.u8(kChunkRecordMagic);
  w.varint(raw.size());
  w.varint(packed.bytes.size());
  w.u8(static_cast<uint8_t>(packed.id));
  w.bytes(packed.bytes);
  return w.take();
}

namespace {

struct RecordHeader {
  uint64_t raw_len;
  uint64_t compressed_len;
  uint8_t codec;
  size_t header_len;
};

RecordHeader read_record_header(ByteView bytes) {
  try {
    ByteReader r(bytes, "chunk record");
    if (r.u8() != kChunkRecordMagic) throw IntegrityError("chunk record: bad magic");
    RecordHeader h;
    h.raw_len = r.varint();
    h.compressed_len = r.varint();
    h.codec = r.u8();
    if (h.codec > static_cast<uint8_t>(CompressorId::kDeflate))
      throw IntegrityError("chunk record: unknown compressor");
    h.header_len = r.pos();
    return h;
  } catch (const FormatError& e) {
    throw IntegrityError(e.what());
  }
}

}  // namespace

size_t chunk_record_size(ByteView prefix) {
  RecordHeader h = read_record_header(prefix);
  return h.header_len + h.compressed_len;
}

Bytes decode_chunk_record(ByteView record) {
  RecordHeader h = read_record_header(record);
  if (record.size() != h.header_len + h.compressed_len)
    throw IntegrityError("chunk record: length mismatch");
  return unpack_block(static_cast<CompressorId>(h.codec), record.subspan(h.header_len),
                      h.raw_len);
}

ChunkLocation MemoryChunkStore::append_chunk(ByteView record) {
  ChunkLocation loc{0, bytes_};
  records_.emplace(bytes_, Bytes(record.begin(), record.end()));
  bytes_ += record.size();
  return loc;
}

Bytes MemoryChunkStore::read_chunk(ChunkLocation loc) const {
  auto it = records_.find(loc.offset);
  if (loc.segment_id != 0 || it == records_.end())
    throw DataUnavailable("chunk " + loc.str() + " is not available");
  return it->second;
}

std::optional<ChunkLocation> MemoryChunkIndex::get(const ChunkHash& h) const {
  if (window_ == 0) return std::nullopt;
  auto it = entries_.find(h);
  if (it == entries_.end()) return std::nullopt;
  return it->second.loc;
}

void MemoryChunkIndex::put(const ChunkHash& h, ChunkLocation loc, Micros inserted) {
  if (window_ == 0) return;
  auto [it, fresh] = entries_.try_emplace(h, Entry{loc, inserted});
  if (!fresh) {
    auto& old = by_time_[it->second.inserted];
    std::erase(old, h);
    if (old.empty()) by_time_.erase(it->second.inserted);
    it->second = Entry{loc, inserted};
  }
  by_time_[inserted].push_back(h);
  peak_ = std::max(peak_, entries_.size());
}

void MemoryChunkIndex::expire(Micros now) {
  if (now < window_) return;
  const Micros cutoff = now - window_;
  while (!by_time_.empty() && by_time_.begin()->first < cutoff) {
    for (const auto& h : by_time_.begin()->second) entries_.erase(h);
    by_time_.erase(by_time_.begin());
  }
}

PayloadStream assemble_payload_stream(const Flow& flow) {
  PayloadStream s;
  s.lengths.reserve(flow.packets.size());
  for (const auto& gp : flow.packets) {
    const auto& data = gp.packet.data;
    const size_t off = gp.header.payload_offset;
    s.bytes.insert(s.bytes.end(), data.begin() + static_cast<ptrdiff_t>(off), data.end());
    s.lengths.push_back(static_cast<uint32_t>(data.size() - off));
  }
  return s;
}

std::vector<PreparedChunk> prepare_chunks(ByteView stream, const std::vector<ChunkSpan>& spans,
                                          bool compress) {
  std::vector<PreparedChunk> out;
  out.reserve(spans.size());
  for (const auto& sp : spans) {
    ByteView raw = stream.subspan(sp.offset, sp.len);
    PreparedChunk c;
    c.hash = sha1(raw);
    c.raw_len = static_cast<uint32_t>(sp.len);
    c.record = encode_chunk_record(raw, compress);
    out.push_back(std::move(c));
  }
  return out;
}

DedupStats& DedupStats::operator+=(const DedupStats& o) {
  chunks += o.chunks;
  hits += o.hits;
  raw_bytes += o.raw_bytes;
  duplicate_bytes += o.duplicate_bytes;
  stored_raw_bytes += o.stored_raw_bytes;
  stored_bytes += o.stored_bytes;
  return *this;
}

std::vector<ChunkRef> dedup_and_store(const std::vector<PreparedChunk>& chunks, ChunkIndex& index,
                                      ChunkStore& store, Micros now, DedupStats* stats) {
  std::vector<ChunkRef> refs;
  refs.reserve(chunks.size());
  DedupStats local;
  for (const auto& c : chunks) {
    ++local.chunks;
    local.raw_bytes += c.raw_len;
    if (auto hit = index.get(c.hash)) {
      ++local.hits;
      local.duplicate_bytes += c.raw_len;
      refs.push_back({*hit, c.raw_len});
      continue;
    }
    ChunkLocation loc = store.append_chunk(c.record);
    local.stored_raw_bytes += c.raw_len;
    local.stored_bytes += c.record.size();
    index.put(c.hash, loc, now);
    refs.push_back({loc, c.raw_len});
  }
  if (stats) *stats += local;
  return refs;
}

void expire_chunk_index(ChunkIndex& index, Micros now) { index.expire(now); }

std::vector<Bytes> read_and_reassemble(const std::vector<ChunkRef>& refs,
                                       const std::vector<uint32_t>& lengths,
                                       const ChunkStore& store) {
  Bytes stream;
  for (const auto& ref : refs) {
    Bytes raw;
    try {
      raw = decode_chunk_record(store.read_chunk(ref.location));
    } catch (const DataUnavailable&) {
      throw DataUnavailable("payload chunk " + ref.location.str() + " is unavailable (evicted)");
    }
    if (raw.size() != ref.raw_len)
      throw IntegrityError("chunk " + ref.location.str() + " has unexpected length");
    stream.insert(stream.end(), raw.begin(), raw.end());
  }
  uint64_t total = 0;
  for (uint32_t l : lengths) total += l;
  if (total != stream.size())
    throw IntegrityError("payload stream length " + std::to_string(stream.size()) +
                         " does not match packet lengths " + std::to_string(total));
  std::vector<Bytes> out;
  out.reserve(lengths.size());
  size_t off = 0;
  for (uint32_t l : lengths) {
    out.emplace_back(stream.begin() + static_cast<ptrdiff_t>(off),
                     stream.begin() + static_cast<ptrdiff_t>(off + l));
    off += l;
  }
  return out;
}

}  // namespace flowvault
