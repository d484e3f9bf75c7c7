#pragma once

#include <cstdint>

#include "flowvault/bytes.hpp"

namespace flowvault {

// Identifies how a byte block was stored. Written into chunk records and the
// archive manifest so an archive is decoded with the compressor it was
// written with.
enum class CompressorId : uint8_t {
  kStored = 0,
  kDeflate = 1,  // zlib raw deflate, level 6, 32 KiB window
};

// Deterministic LZ77-family block compressor.
Bytes deflate_block(ByteView input);
// Inflates exactly `raw_len` bytes; throws IntegrityError on mismatch.
Bytes inflate_block(ByteView input, size_t raw_len);

struct PackedBlock {
  CompressorId id = CompressorId::kStored;
  Bytes bytes;
};

// Compresses with deflate unless that would expand the input, in which case
// the stored escape is used.
PackedBlock pack_block(ByteView input, bool compress = true);
Bytes unpack_block(CompressorId id, ByteView bytes, size_t raw_len);

uint32_t crc32_of(ByteView data);

}  // namespace flowvault
