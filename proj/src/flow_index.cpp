#include "flowvault/flow_index.hpp"

#include <algorithm>
#include <array>

namespace flowvault {

const char* field_name(IndexField f) { return f == IndexField::kIpAddr ? "ip" : "port"; }

uint64_t fnv1a64(ByteView bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint32_t bucket_of(ByteView value_be) {
  return static_cast<uint32_t>(fnv1a64(value_be) % kIndexBuckets);
}

uint32_t bucket_of_ip(uint32_t ip) {
  std::array<uint8_t, 4> b;
  store_be32(b.data(), ip);
  return bucket_of(b);
}

uint32_t bucket_of_port(uint16_t port) {
  std::array<uint8_t, 2> b;
  store_be16(b.data(), port);
  return bucket_of(b);
}

EpochIndexBuilder::EpochIndexBuilder(uint64_t epoch_id, IndexField field, uint64_t base)
    : epoch_id_(epoch_id), field_(field), base_(base), buckets_(kIndexBuckets) {}

void EpochIndexBuilder::insert_bucket(uint32_t bucket, uint64_t location) {
  if (sealed_) throw UsageError("index builder already sealed");
  if (bucket >= kIndexBuckets) throw UsageError("bucket out of range");
  if (location < base_) throw UsageError("flow location precedes epoch base");
  buckets_[bucket].push_back(location);
}

void EpochIndexBuilder::insert_flow(const FlowKey& key, uint64_t location) {
  if (field_ == IndexField::kIpAddr) {
    insert_ip(key.src_ip, location);
    insert_ip(key.dst_ip, location);
  } else {
    insert_port(key.src_port, location);
    insert_port(key.dst_port, location);
  }
}

EpochIndex EpochIndexBuilder::seal() {
  if (sealed_) throw UsageError("index builder already sealed");
  sealed_ = true;

  Bytes bitmap(kIndexBitmapSize, 0);
  Bytes body;
  ByteWriter bw(body);
  uint64_t pairs = 0;
  uint32_t nonempty = 0;
  for (uint32_t b = 0; b < kIndexBuckets; ++b) {
    auto& v = buckets_[b];
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    bitmap[b >> 3] |= static_cast<uint8_t>(1u << (b & 7));
    ++nonempty;
    pairs += v.size();
    bw.varint(v.size());
    uint64_t prev = base_;
    for (uint64_t loc : v) {
      bw.varint(loc - prev);
      prev = loc;
    }
    std::vector<uint64_t>().swap(v);
  }

  EpochIndex idx;
  ByteWriter w(idx.bytes_);
  w.u32le(EpochIndex::kMagic);
  w.u8(EpochIndex::kVersion);
  w.u8(static_cast<uint8_t>(field_));
  w.u8(kIndexHashFnv1a64);
  w.u8(0);
  w.u64le(epoch_id_);
  w.u64le(base_);
  w.u64le(pairs);
  w.u32le(nonempty);
  w.bytes(bitmap);
  w.bytes(body);
  idx.epoch_id_ = epoch_id_;
  idx.field_ = field_;
  idx.base_ = base_;
  idx.pairs_ = pairs;
  idx.build_offsets();
  return idx;
}

EpochIndex EpochIndex::parse(Bytes serialized) {
  EpochIndex idx;
  idx.bytes_ = std::move(serialized);
  try {
    ByteReader r(idx.bytes_, "epoch index");
    if (r.u32le() != kMagic) throw IntegrityError("epoch index: bad magic");
    if (r.u8() != kVersion) throw IntegrityError("epoch index: unsupported version");
    uint8_t field = r.u8();
    if (field > 1) throw IntegrityError("epoch index: unknown field");
    if (r.u8() != kIndexHashFnv1a64) throw IntegrityError("epoch index: unknown hash function");
    r.u8();
    idx.field_ = static_cast<IndexField>(field);
    idx.epoch_id_ = r.u64le();
    idx.base_ = r.u64le();
    idx.pairs_ = r.u64le();
    r.u32le();
  } catch (const FormatError& e) {
    throw IntegrityError(e.what());
  }
  idx.build_offsets();
  return idx;
}

void EpochIndex::build_offsets() {
  try {
    ByteReader r(bytes_, "epoch index");
    r.bytes(kIndexHeaderSize - 4);
    const uint32_t nonempty = r.u32le();
    ByteView bitmap = r.bytes(kIndexBitmapSize);
    bucket_ids_.clear();
    offsets_.clear();
    uint64_t pairs = 0;
    for (uint32_t b = 0; b < kIndexBuckets; ++b) {
      if (!(bitmap[b >> 3] & (1u << (b & 7)))) continue;
      bucket_ids_.push_back(b);
      offsets_.push_back(static_cast<uint32_t>(r.pos()));
      const uint64_t n = r.varint();
      if (n == 0) throw IntegrityError("epoch index: empty bucket marked present");
      for (uint64_t i = 0; i < n; ++i) {
        const uint64_t d = r.varint();
        if (i > 0 && d == 0) throw IntegrityError("epoch index: non-increasing bucket");
      }
      pairs += n;
    }
    if (bucket_ids_.size() != nonempty || pairs != pairs_ || !r.done())
      throw IntegrityError("epoch index: inconsistent counts");
  } catch (const FormatError& e) {
    throw IntegrityError(e.what());
  }
}

std::vector<uint64_t> EpochIndex::lookup_bucket(uint32_t bucket) const {
  std::vector<uint64_t> out;
  auto it = std::lower_bound(bucket_ids_.begin(), bucket_ids_.end(), bucket);
  if (it == bucket_ids_.end() || *it != bucket) return out;
  const size_t i = static_cast<size_t>(it - bucket_ids_.begin());
  ByteReader r(ByteView(bytes_).subspan(offsets_[i]), "epoch index bucket");
  const uint64_t n = r.varint();
  out.reserve(n);
  uint64_t cur = base_;
  for (uint64_t k = 0; k < n; ++k) {
    cur += r.varint();
    out.push_back(cur);
  }
  return out;
}

std::vector<uint64_t> intersect(const std::vector<uint64_t>& a, const std::vector<uint64_t>& b) {
  std::vector<uint64_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<uint64_t> intersect(const std::vector<std::vector<uint64_t>>& lists) {
  if (lists.empty()) return {};
  std::vector<uint64_t> acc = lists.front();
  for (size_t i = 1; i < lists.size() && !acc.empty(); ++i) acc = intersect(acc, lists[i]);
  return acc;
}

}  // namespace flowvault
