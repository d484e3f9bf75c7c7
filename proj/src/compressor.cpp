#include "flowvault/compressor.hpp"

#include <zlib.h>

#include <cstring>

namespace flowvault {

Bytes deflate_block(ByteView input) {
  z_stream zs;
  std::memset(&zs, 0, sizeof zs);
  if (deflateInit2(&zs, 6, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error("deflateInit2 failed");
  Bytes out(deflateBound(&zs, static_cast<uLong>(input.size())));
  zs.next_in = const_cast<Bytef*>(input.data());
  zs.avail_in = static_cast<uInt>(input.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error("deflate failed");
  out.resize(zs.total_out);
  return out;
}

Bytes inflate_block(ByteView input, size_t raw_len) {
  z_stream zs;
  std::memset(&zs, 0, sizeof zs);
  if (inflateInit2(&zs, -15) != Z_OK) throw Error("inflateInit2 failed");
  Bytes out(raw_len);
  zs.next_in = const_cast<Bytef*>(input.data());
  zs.avail_in = static_cast<uInt>(input.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  size_t produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != raw_len)
    throw IntegrityError("inflate: corrupt block or length mismatch");
  return out;
}

PackedBlock pack_block(ByteView input, bool compress) {
  if (compress && !input.empty()) {
    Bytes z = deflate_block(input);
    if (z.size() < input.size()) return {CompressorId::kDeflate, std::move(z)};
  }
  return {CompressorId::kStored, Bytes(input.begin(), input.end())};
}

Bytes unpack_block(CompressorId id, ByteView bytes, size_t raw_len) {
  switch (id) {
    case CompressorId::kStored:
      if (bytes.size() != raw_len) throw IntegrityError("stored block length mismatch");
      return Bytes(bytes.begin(), bytes.end());
    case CompressorId::kDeflate:
      return inflate_block(bytes, raw_len);
  }
  throw IntegrityError("unknown compressor id " + std::to_string(static_cast<int>(id)));
}

uint32_t crc32_of(ByteView data) {
  return static_cast<uint32_t>(crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

}  // namespace flowvault
