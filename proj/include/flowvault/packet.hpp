#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

#include "flowvault/bytes.hpp"

namespace flowvault {

// Trace time in microseconds since the epoch.
using Micros = uint64_t;

inline constexpr uint32_t kLinkEthernet = 1;
inline constexpr uint32_t kLinkRaw = 101;
inline constexpr uint32_t kLinkIpv4 = 228;

struct Packet {
  uint32_t ts_sec = 0;
  uint32_t ts_frac = 0;  // microseconds
  uint32_t captured_len = 0;
  uint32_t original_len = 0;
  Bytes data;

  Micros ts() const { return Micros{ts_sec} * 1'000'000 + ts_frac; }
  // Throws UsageError if the packet breaks its length/timestamp invariants.
  void validate() const;

  static Packet make(Micros ts, Bytes data, uint32_t original_len = 0);

  friend bool operator==(const Packet&, const Packet&) = default;
};

struct FlowKey {
  uint32_t src_ip = 0;
  uint32_t dst_ip = 0;
  uint8_t protocol = 0;
  uint16_t src_port = 0;
  uint16_t dst_port = 0;

  static constexpr size_t kEncodedSize = 13;

  void encode(ByteWriter& w) const;
  static FlowKey decode(ByteReader& r);

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

struct FlowKeyHash {
  size_t operator()(const FlowKey& k) const noexcept;
};

std::string format_ipv4(uint32_t addr);
// Parses dotted-quad; throws UsageError on malformed text.
uint32_t parse_ipv4(const std::string& text);
std::string to_string(const FlowKey& key);

enum class ParseClass : uint8_t { kTcp = 0, kUdp = 1, kOtherIp = 2, kNonIp = 3 };

struct Ipv4Fields {
  uint8_t version = 4;
  uint8_t ihl = 5;
  uint8_t tos = 0;
  uint16_t total_length = 0;
  uint16_t id = 0;
  uint8_t flags = 0;          // top 3 bits of the fragment word
  uint16_t frag_offset = 0;   // low 13 bits
  uint8_t ttl = 0;
  uint8_t protocol = 0;
  uint16_t checksum = 0;
  uint32_t src = 0;
  uint32_t dst = 0;
  Bytes options;

  size_t header_len() const { return size_t{ihl} * 4; }
  friend bool operator==(const Ipv4Fields&, const Ipv4Fields&) = default;
};

namespace tcp_flag {
inline constexpr uint8_t kFin = 0x01;
inline constexpr uint8_t kSyn = 0x02;
inline constexpr uint8_t kRst = 0x04;
inline constexpr uint8_t kPsh = 0x08;
inline constexpr uint8_t kAck = 0x10;
}  // namespace tcp_flag

struct TcpFields {
  uint16_t src_port = 0;
  uint16_t dst_port = 0;
  uint32_t seq = 0;
  uint32_t ack = 0;
  uint8_t data_offset = 5;  // 32-bit words
  uint8_t reserved = 0;     // low nibble of byte 12
  uint8_t flags = 0;
  uint16_t window = 0;
  uint16_t checksum = 0;
  uint16_t urgent = 0;
  Bytes options;

  size_t header_len() const { return size_t{data_offset} * 4; }
  friend bool operator==(const TcpFields&, const TcpFields&) = default;
};

struct UdpFields {
  uint16_t src_port = 0;
  uint16_t dst_port = 0;
  uint16_t length = 0;
  uint16_t checksum = 0;
  friend bool operator==(const UdpFields&, const UdpFields&) = default;
};

// Structured, lossless view of a packet's header region. For kNonIp the
// whole packet is kept in `raw` and payload_offset equals its length.
struct ParsedHeader {
  ParseClass parse_class = ParseClass::kNonIp;
  Bytes link_header;
  Ipv4Fields ip;
  TcpFields tcp;
  UdpFields udp;
  Bytes raw;
  size_t payload_offset = 0;

  friend bool operator==(const ParsedHeader&, const ParsedHeader&) = default;
};

ParsedHeader parse_headers(const Packet& packet, uint32_t link_type);
ParsedHeader parse_headers(ByteView data, uint32_t link_type);

// Re-serializes the header region; equals data[0, payload_offset).
Bytes serialize_headers(const ParsedHeader& header);
void serialize_headers(const ParsedHeader& header, Bytes& out);

FlowKey extract_flow_key(const ParsedHeader& header);

// RFC 1071 ones-complement sum helpers.
uint32_t checksum_accumulate(ByteView data, uint32_t sum = 0);
uint16_t checksum_finish(uint32_t sum);
// Checksum of an IPv4 header as serialized, with the checksum field zeroed.
uint16_t ipv4_header_checksum(const Ipv4Fields& ip);
// TCP/UDP checksum over pseudo header + segment (checksum field zeroed).
uint16_t transport_checksum(uint32_t src, uint32_t dst, uint8_t protocol, ByteView segment);

}  // namespace flowvault
