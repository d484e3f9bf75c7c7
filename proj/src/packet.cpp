#include "flowvault/packet.hpp"

#include <charconv>
#include <cstdio>

namespace flowvault {

void Packet::validate() const {
  if (captured_len != data.size())
    throw UsageError("packet captured_len " + std::to_string(captured_len) +
                     " does not match data length " + std::to_string(data.size()));
  if (captured_len > original_len)
    throw UsageError("packet captured_len exceeds original_len");
  if (ts_frac >= 1'000'000) throw UsageError("packet timestamp fraction out of range");
}

Packet Packet::make(Micros ts, Bytes data, uint32_t original_len) {
  Packet p;
  p.ts_sec = static_cast<uint32_t>(ts / 1'000'000);
  p.ts_frac = static_cast<uint32_t>(ts % 1'000'000);
  p.captured_len = static_cast<uint32_t>(data.size());
  p.original_len = original_len ? original_len : p.captured_len;
  p.data = std::move(data);
  return p;
}

void FlowKey::encode(ByteWriter& w) const {
  w.u32be(src_ip);
  w.u32be(dst_ip);
  w.u8(protocol);
  w.u16be(src_port);
  w.u16be(dst_port);
}

FlowKey FlowKey::decode(ByteReader& r) {
  FlowKey k;
  k.src_ip = r.u32be();
  k.dst_ip = r.u32be();
  k.protocol = r.u8();
  k.src_port = r.u16be();
  k.dst_port = r.u16be();
  return k;
}

size_t FlowKeyHash::operator()(const FlowKey& k) const noexcept {
  uint64_t h = (uint64_t{k.src_ip} << 32) | k.dst_ip;
  uint64_t l = (uint64_t{k.protocol} << 32) | (uint64_t{k.src_port} << 16) | k.dst_port;
  h ^= l + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return static_cast<size_t>(h);
}

std::string format_ipv4(uint32_t addr) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", addr >> 24, (addr >> 16) & 0xff,
                (addr >> 8) & 0xff, addr & 0xff);
  return buf;
}

uint32_t parse_ipv4(const std::string& text) {
  uint32_t out = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 4; ++i) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc() || octet > 255 || next == p)
      throw UsageError("invalid IPv4 address '" + text + "'");
    out = (out << 8) | octet;
    p = next;
    if (i < 3) {
      if (p == end || *p != '.') throw UsageError("invalid IPv4 address '" + text + "'");
      ++p;
    }
  }
  if (p != end) throw UsageError("invalid IPv4 address '" + text + "'");
  return out;
}

std::string to_string(const FlowKey& key) {
  return format_ipv4(key.src_ip) + ":" + std::to_string(key.src_port) + " -> " +
         format_ipv4(key.dst_ip) + ":" + std::to_string(key.dst_port) + " proto " +
         std::to_string(key.protocol);
}

namespace {

ParsedHeader non_ip(ByteView data) {
  ParsedHeader h;
  h.parse_class = ParseClass::kNonIp;
  h.raw.assign(data.begin(), data.end());
  h.payload_offset = data.size();
  return h;
}

}  // namespace

ParsedHeader parse_headers(const Packet& packet, uint32_t link_type) {
  return parse_headers(ByteView(packet.data), link_type);
}

ParsedHeader parse_headers(ByteView data, uint32_t link_type) {
  size_t off = 0;
  if (link_type == kLinkEthernet) {
    if (data.size() < 14 || load_be16(&data[12]) != 0x0800) return non_ip(data);
    off = 14;
  } else if (link_type != kLinkRaw && link_type != kLinkIpv4) {
    return non_ip(data);
  }

  if (data.size() < off + 20) return non_ip(data);
  const uint8_t* ip = &data[off];
  uint8_t version = ip[0] >> 4;
  uint8_t ihl = ip[0] & 0x0f;
  if (version != 4 || ihl < 5 || data.size() < off + size_t{ihl} * 4) return non_ip(data);

  ParsedHeader h;
  h.link_header.assign(data.begin(), data.begin() + static_cast<ptrdiff_t>(off));
  Ipv4Fields& f = h.ip;
  f.version = version;
  f.ihl = ihl;
  f.tos = ip[1];
  f.total_length = load_be16(ip + 2);
  f.id = load_be16(ip + 4);
  uint16_t frag = load_be16(ip + 6);
  f.flags = static_cast<uint8_t>(frag >> 13);
  f.frag_offset = frag & 0x1fff;
  f.ttl = ip[8];
  f.protocol = ip[9];
  f.checksum = load_be16(ip + 10);
  f.src = load_be32(ip + 12);
  f.dst = load_be32(ip + 16);
  f.options.assign(ip + 20, ip + size_t{ihl} * 4);

  size_t t = off + f.header_len();
  const size_t avail = data.size() - t;
  const uint8_t* tp = data.data() + t;
  h.parse_class = ParseClass::kOtherIp;
  h.payload_offset = t;
  if (f.frag_offset == 0 && f.protocol == 6 && avail >= 20) {
    uint8_t doff = tp[12] >> 4;
    if (doff >= 5 && avail >= size_t{doff} * 4) {
      TcpFields& tcp = h.tcp;
      tcp.src_port = load_be16(tp);
      tcp.dst_port = load_be16(tp + 2);
      tcp.seq = load_be32(tp + 4);
      tcp.ack = load_be32(tp + 8);
      tcp.data_offset = doff;
      tcp.reserved = tp[12] & 0x0f;
      tcp.flags = tp[13];
      tcp.window = load_be16(tp + 14);
      tcp.checksum = load_be16(tp + 16);
      tcp.urgent = load_be16(tp + 18);
      tcp.options.assign(tp + 20, tp + size_t{doff} * 4);
      h.parse_class = ParseClass::kTcp;
      h.payload_offset = t + tcp.header_len();
    }
  } else if (f.frag_offset == 0 && f.protocol == 17 && avail >= 8) {
    h.udp.src_port = load_be16(tp);
    h.udp.dst_port = load_be16(tp + 2);
    h.udp.length = load_be16(tp + 4);
    h.udp.checksum = load_be16(tp + 6);
    h.parse_class = ParseClass::kUdp;
    h.payload_offset = t + 8;
  }
  return h;
}

namespace {

void put_ip(const Ipv4Fields& f, Bytes& out) {
  size_t at = out.size();
  out.resize(at + 20);
  uint8_t* p = out.data() + at;
  p[0] = static_cast<uint8_t>((f.version << 4) | (f.ihl & 0x0f));
  p[1] = f.tos;
  store_be16(p + 2, f.total_length);
  store_be16(p + 4, f.id);
  store_be16(p + 6, static_cast<uint16_t>((f.flags << 13) | (f.frag_offset & 0x1fff)));
  p[8] = f.ttl;
  p[9] = f.protocol;
  store_be16(p + 10, f.checksum);
  store_be32(p + 12, f.src);
  store_be32(p + 16, f.dst);
  out.insert(out.end(), f.options.begin(), f.options.end());
}

}  // namespace

void serialize_headers(const ParsedHeader& h, Bytes& out) {
  if (h.parse_class == ParseClass::kNonIp) {
    out.insert(out.end(), h.raw.begin(), h.raw.end());
    return;
  }
  out.insert(out.end(), h.link_header.begin(), h.link_header.end());
  put_ip(h.ip, out);
  if (h.parse_class == ParseClass::kTcp) {
    const TcpFields& t = h.tcp;
    size_t at = out.size();
    out.resize(at + 20);
    uint8_t* p = out.data() + at;
    store_be16(p, t.src_port);
    store_be16(p + 2, t.dst_port);
    store_be32(p + 4, t.seq);
    store_be32(p + 8, t.ack);
    p[12] = static_cast<uint8_t>((t.data_offset << 4) | (t.reserved & 0x0f));
    p[13] = t.flags;
    store_be16(p + 14, t.window);
    store_be16(p + 16, t.checksum);
    store_be16(p + 18, t.urgent);
    out.insert(out.end(), t.options.begin(), t.options.end());
  } else if (h.parse_class == ParseClass::kUdp) {
    size_t at = out.size();
    out.resize(at + 8);
    uint8_t* p = out.data() + at;
    store_be16(p, h.udp.src_port);
    store_be16(p + 2, h.udp.dst_port);
    store_be16(p + 4, h.udp.length);
    store_be16(p + 6, h.udp.checksum);
  }
}

Bytes serialize_headers(const ParsedHeader& h) {
  Bytes out;
  serialize_headers(h, out);
  return out;
}

FlowKey extract_flow_key(const ParsedHeader& h) {
  FlowKey k;
  switch (h.parse_class) {
    case ParseClass::kNonIp:
      return k;
    case ParseClass::kTcp:
      k.src_port = h.tcp.src_port;
      k.dst_port = h.tcp.dst_port;
      break;
    case ParseClass::kUdp:
      k.src_port = h.udp.src_port;
      k.dst_port = h.udp.dst_port;
      break;
    case ParseClass::kOtherIp:
      break;
  }
  k.src_ip = h.ip.src;
  k.dst_ip = h.ip.dst;
  k.protocol = h.ip.protocol;
  return k;
}

uint32_t checksum_accumulate(ByteView data, uint32_t sum) {
  size_t i = 0;
  for (; i + 1 < data.size(); i += 2) sum += uint32_t{data[i]} << 8 | data[i + 1];
  if (i < data.size()) sum += uint32_t{data[i]} << 8;
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return sum;
}

uint16_t checksum_finish(uint32_t sum) {
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<uint16_t>(~sum & 0xffff);
}

uint16_t ipv4_header_checksum(const Ipv4Fields& ip) {
  Ipv4Fields copy = ip;
  copy.checksum = 0;
  Bytes buf;
  put_ip(copy, buf);
  return checksum_finish(checksum_accumulate(buf));
}

uint16_t transport_checksum(uint32_t src, uint32_t dst, uint8_t protocol, ByteView segment) {
  uint8_t pseudo[12];
  store_be32(pseudo, src);
  store_be32(pseudo + 4, dst);
  pseudo[8] = 0;
  pseudo[9] = protocol;
  store_be16(pseudo + 10, static_cast<uint16_t>(segment.size()));
  uint32_t sum = checksum_accumulate(ByteView(pseudo, 12));
  sum = checksum_accumulate(segment, sum);
  return checksum_finish(sum);
}

}  // namespace flowvault
