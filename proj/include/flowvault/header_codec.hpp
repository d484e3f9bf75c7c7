#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "flowvault/compressor.hpp"
#include "flowvault/flow_grouper.hpp"
#include "flowvault/locations.hpp"

namespace flowvault {

// Header fields the codec emits residuals for. Each field has its own
// column in the residual stream.
enum class HeaderField : uint8_t {
  kTimestamp,
  kTieRank,
  kOriginalLen,
  kCapturedLen,
  kLinkHeader,
  kVersionIhl,
  kTos,
  kTotalLength,
  kIpId,
  kFragment,
  kTtl,
  kIpChecksum,
  kIpOptions,
  kTcpSeq,
  kTcpAck,
  kTcpOffsetFlags,
  kTcpWindow,
  kTcpUrgent,
  kTcpOptions,
  kTransportChecksum,
  kUdpLength,
  kRawHeader,
  kCount
};

enum class ResidualMode : uint8_t { kPredictedOk, kDelta, kLiteral };

struct ResidualField {
  HeaderField field;
  ResidualMode mode;
  Bytes value;  // empty for kPredictedOk
};

// Stage 1+2 output: per-field columns plus per-packet mode flags.
struct ResidualStreams {
  static constexpr size_t kFlagColumns = 3;
  static constexpr size_t kColumns = kFlagColumns + static_cast<size_t>(HeaderField::kCount);
  std::array<Bytes, kColumns> columns;

  Bytes& flags(size_t i) { return columns[i]; }
  Bytes& field(HeaderField f) { return columns[kFlagColumns + static_cast<size_t>(f)]; }
  const Bytes& field(HeaderField f) const {
    return columns[kFlagColumns + static_cast<size_t>(f)];
  }

  // Column-presence bitmap, lengths of non-empty columns, then the columns.
  Bytes serialize() const;
  static ResidualStreams parse(ByteView bytes);
  size_t total_size() const;
};

struct CompressedHeaderBlock {
  static constexpr uint8_t kMagic = 0xFB;
  static constexpr uint8_t kVersion = 1;

  FlowKey key;
  uint32_t packet_count = 0;
  Micros first_ts = 0;
  std::vector<ChunkRef> chunk_refs;
  CompressorId residual_codec = CompressorId::kStored;
  uint32_t residual_raw_len = 0;
  Bytes encoded;

  Bytes serialize() const;
  // Throws IntegrityError on bad magic/version/lengths.
  static CompressedHeaderBlock parse(ByteView bytes);
  // Only the fields before the chunk list; used to verify index candidates.
  static FlowKey peek_key(ByteView bytes);

  friend bool operator==(const CompressedHeaderBlock&, const CompressedHeaderBlock&) = default;
};

struct DecodedHeader {
  Micros ts = 0;
  uint32_t tie_rank = 0;
  uint32_t original_len = 0;
  uint32_t captured_len = 0;
  Bytes header;
  size_t payload_len = 0;
};

// Stages 1+2. If `trace` is non-null, every emitted residual is appended to
// it (one vector per packet), for inspection.
ResidualStreams encode_residuals(const Flow& flow,
                                 std::vector<std::vector<ResidualField>>* trace = nullptr);

// Stages 1-3. chunk_refs are left empty for the payload codec to fill.
CompressedHeaderBlock compress_headers(const Flow& flow, bool dictionary_pass = true);

std::vector<DecodedHeader> decompress_headers(const CompressedHeaderBlock& block);

}  // namespace flowvault
