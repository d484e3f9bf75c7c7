#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace flowvault {

// Byte offset of a flow's header block in the global (fast-tier) header log.
struct FlowLocation {
  uint64_t offset = 0;
  friend auto operator<=>(const FlowLocation&, const FlowLocation&) = default;
};

// Position of a chunk record in the bulk tier, packed into 8 bytes as
// segment_id (24 bits) | offset (40 bits).
struct ChunkLocation {
  uint32_t segment_id = 0;
  uint64_t offset = 0;

  static constexpr uint64_t kOffsetBits = 40;

  uint64_t pack() const { return (uint64_t{segment_id} << kOffsetBits) | offset; }
  static ChunkLocation unpack(uint64_t v) {
    return {static_cast<uint32_t>(v >> kOffsetBits), v & ((uint64_t{1} << kOffsetBits) - 1)};
  }
  std::string str() const {
    return "seg " + std::to_string(segment_id) + " @" + std::to_string(offset);
  }
  friend auto operator<=>(const ChunkLocation&, const ChunkLocation&) = default;
};

struct ChunkRef {
  ChunkLocation location;
  uint32_t raw_len = 0;
  friend bool operator==(const ChunkRef&, const ChunkRef&) = default;
};

}  // namespace flowvault
