#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowvault/bytes.hpp"
#include "flowvault/packet.hpp"

namespace flowvault {

enum class IndexField : uint8_t { kIpAddr = 0, kPort = 1 };

const char* field_name(IndexField f);  // "ip" / "port"

inline constexpr uint32_t kIndexBuckets = 65536;
inline constexpr uint8_t kIndexHashFnv1a64 = 1;

uint64_t fnv1a64(ByteView bytes);
uint32_t bucket_of(ByteView value_be);
uint32_t bucket_of_ip(uint32_t ip);
uint32_t bucket_of_port(uint16_t port);

class EpochIndex;

// Collects (bucket, location) pairs for one epoch and one field. Locations
// are global header-log offsets, all >= base (the epoch log's first offset).
class EpochIndexBuilder {
 public:
  EpochIndexBuilder(uint64_t epoch_id, IndexField field, uint64_t base);

  void insert_bucket(uint32_t bucket, uint64_t location);
  void insert_ip(uint32_t ip, uint64_t location) { insert_bucket(bucket_of_ip(ip), location); }
  void insert_port(uint16_t port, uint64_t location) {
    insert_bucket(bucket_of_port(port), location);
  }
  // Both endpoints of the key for this builder's field.
  void insert_flow(const FlowKey& key, uint64_t location);

  EpochIndex seal();
  bool sealed() const { return sealed_; }

 private:
  uint64_t epoch_id_;
  IndexField field_;
  uint64_t base_;
  std::vector<std::vector<uint64_t>> buckets_;
  bool sealed_ = false;
};

// Sealed, immutable index: per-bucket sorted unique locations, stored as
// delta varints (first delta relative to base).
//
// Layout (little-endian):
//   magic "FVIX" u32, version u8, field u8, hash id u8, reserved u8,
//   epoch_id u64, base u64, pair count u64, non-empty bucket count u32,
//   presence bitmap 8192 B (bit b of byte b/8 set if bucket b non-empty),
//   then for each non-empty bucket in order: count varint, deltas varints.
class EpochIndex {
 public:
  static constexpr uint32_t kMagic = 0x58495646;  // "FVIX"
  static constexpr uint8_t kVersion = 1;

  static EpochIndex parse(Bytes serialized);
  const Bytes& serialized() const { return bytes_; }

  uint64_t epoch_id() const { return epoch_id_; }
  IndexField field() const { return field_; }
  uint64_t base() const { return base_; }
  uint64_t pairs() const { return pairs_; }
  size_t nonempty_buckets() const { return offsets_.size(); }

  std::vector<uint64_t> lookup_bucket(uint32_t bucket) const;
  std::vector<uint64_t> lookup_ip(uint32_t ip) const { return lookup_bucket(bucket_of_ip(ip)); }
  std::vector<uint64_t> lookup_port(uint16_t port) const {
    return lookup_bucket(bucket_of_port(port));
  }

 private:
  friend class EpochIndexBuilder;
  EpochIndex() = default;
  void build_offsets();

  Bytes bytes_;
  uint64_t epoch_id_ = 0;
  IndexField field_ = IndexField::kIpAddr;
  uint64_t base_ = 0;
  uint64_t pairs_ = 0;
  std::vector<uint32_t> bucket_ids_;  // sorted, parallel to offsets_
  std::vector<uint32_t> offsets_;     // byte offset of each bucket's count varint
};

inline constexpr size_t kIndexHeaderSize = 4 + 4 + 8 + 8 + 8 + 4;
inline constexpr size_t kIndexBitmapSize = kIndexBuckets / 8;

// Sorted intersection of strictly increasing lists.
std::vector<uint64_t> intersect(const std::vector<std::vector<uint64_t>>& lists);
std::vector<uint64_t> intersect(const std::vector<uint64_t>& a, const std::vector<uint64_t>& b);

}  // namespace flowvault
