#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flowvault/error.hpp"

namespace flowvault {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

inline uint64_t zigzag_encode(int64_t v) {
  return (static_cast<uint64_t>(v) << 1) ^ static_cast<uint64_t>(v >> 63);
}

inline size_t varint_size(uint64_t v) {
  size_t n = 1;
  while (v >= 0x80) {
    v >>= 7;
    ++n;
  }
  return n;
}
inline int64_t zigzag_decode(uint64_t v) {
  return static_cast<int64_t>(v >> 1) ^ -static_cast<int64_t>(v & 1);
}

// Appends little-endian integers and LEB128 varints to a growing buffer.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes& out) : ext_(&out) {}

  void u8(uint8_t v) { buf().push_back(v); }
  void u16le(uint16_t v) { put_le(v, 2); }
  void u32le(uint32_t v) { put_le(v, 4); }
  void u64le(uint64_t v) { put_le(v, 8); }
  void u16be(uint16_t v) {
    buf().push_back(static_cast<uint8_t>(v >> 8));
    buf().push_back(static_cast<uint8_t>(v));
  }
  void u32be(uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) buf().push_back(static_cast<uint8_t>(v >> s));
  }
  void varint(uint64_t v) {
    while (v >= 0x80) {
      buf().push_back(static_cast<uint8_t>(v | 0x80));
      v >>= 7;
    }
    buf().push_back(static_cast<uint8_t>(v));
  }
  void svarint(int64_t v) { varint(zigzag_encode(v)); }
  void bytes(ByteView b) { buf().insert(buf().end(), b.begin(), b.end()); }

  size_t size() const { return ext_ ? ext_->size() : own_.size(); }
  Bytes take() { return std::move(own_); }
  const Bytes& view() const { return ext_ ? *ext_ : own_; }

 private:
  Bytes& buf() { return ext_ ? *ext_ : own_; }
  void put_le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf().push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  Bytes own_;
  Bytes* ext_ = nullptr;
};

// Bounds-checked cursor over a byte view. Every overrun throws FormatError
// naming `what`, so corrupt input never reads out of range.
class ByteReader {
 public:
  ByteReader(ByteView data, std::string what = "buffer") : data_(data), what_(std::move(what)) {}

  uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  uint16_t u16le() { return static_cast<uint16_t>(get_le(2)); }
  uint32_t u32le() { return static_cast<uint32_t>(get_le(4)); }
  uint64_t u64le() { return get_le(8); }
  uint16_t u16be() {
    need(2);
    uint16_t v = static_cast<uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  uint32_t u32be() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
  }
  uint64_t varint() {
    uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      uint8_t b = u8();
      v |= static_cast<uint64_t>(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
    }
    throw FormatError(what_ + ": varint too long");
  }
  int64_t svarint() { return zigzag_decode(varint()); }
  ByteView bytes(size_t n) {
    need(n);
    ByteView v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }

  size_t pos() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated");
  }
  uint64_t get_le(int n) {
    need(static_cast<size_t>(n));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<size_t>(n);
    return v;
  }

  ByteView data_;
  size_t pos_ = 0;
  std::string what_;
};

inline void store_be16(uint8_t* p, uint16_t v) {
  p[0] = static_cast<uint8_t>(v >> 8);
  p[1] = static_cast<uint8_t>(v);
}
inline uint16_t load_be16(const uint8_t* p) { return static_cast<uint16_t>((p[0] << 8) | p[1]); }
inline uint32_t load_be32(const uint8_t* p) {
  return (uint32_t{p[0]} << 24) | (uint32_t{p[1]} << 16) | (uint32_t{p[2]} << 8) | p[3];
}
inline void store_be32(uint8_t* p, uint32_t v) {
  p[0] = static_cast<uint8_t>(v >> 24);
  p[1] = static_cast<uint8_t>(v >> 16);
  p[2] = static_cast<uint8_t>(v >> 8);
  p[3] = static_cast<uint8_t>(v);
}

}  // namespace flowvault
