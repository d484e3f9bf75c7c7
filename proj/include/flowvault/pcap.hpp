#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flowvault/packet.hpp"

namespace flowvault {

inline constexpr uint32_t kPcapMagic = 0xa1b2c3d4;
inline constexpr uint32_t kPcapMagicNanos = 0xa1b23c4d;
inline constexpr uint32_t kPcapSnaplen = 65535;
inline constexpr size_t kPcapGlobalHeaderSize = 24;
inline constexpr size_t kPcapRecordHeaderSize = 16;

// Streaming libpcap (microsecond) reader. Accepts both byte orders.
class PcapReader {
 public:
  // Reads and validates the global header; throws FormatError if malformed.
  explicit PcapReader(std::istream& in);

  // Next record, or nullopt at end of stream. A truncated final record is
  // dropped with a warning.
  std::optional<Packet> next();

  uint32_t link_type() const { return link_type_; }
  uint32_t snaplen() const { return snaplen_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::istream& in_;
  bool swapped_ = false;
  uint32_t link_type_ = 0;
  uint32_t snaplen_ = 0;
  bool eof_ = false;
  std::vector<std::string> warnings_;
};

// Streaming writer; emits magic 0xa1b2c3d4, v2.4, snaplen 65535, little-endian.
class PcapWriter {
 public:
  PcapWriter(std::ostream& out, uint32_t link_type = kLinkEthernet);

  void write(const Packet& p);
  // Writes a record whose bytes are `data` but whose lengths and timestamp
  // come from the arguments; used for header-only output.
  void write(Micros ts, ByteView data, uint32_t original_len);

  uint64_t records() const { return records_; }

 private:
  std::ostream& out_;
  uint64_t records_ = 0;
};

struct PcapTrace {
  uint32_t link_type = kLinkEthernet;
  std::vector<Packet> packets;
  std::vector<std::string> warnings;
};

PcapTrace read_pcap(std::istream& in);
PcapTrace read_pcap(ByteView bytes);
PcapTrace read_pcap_file(const std::string& path);

Bytes write_pcap(const std::vector<Packet>& packets, uint32_t link_type = kLinkEthernet);
void write_pcap_file(const std::string& path, const std::vector<Packet>& packets,
                     uint32_t link_type = kLinkEthernet);

}  // namespace flowvault
