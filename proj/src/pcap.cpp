#include "flowvault/pcap.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace flowvault {

namespace {

uint32_t le32(const uint8_t* p) {
  return uint32_t{p[0]} | uint32_t{p[1]} << 8 | uint32_t{p[2]} << 16 | uint32_t{p[3]} << 24;
}

uint32_t bswap32(uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00) | ((v << 8) & 0xff0000) | (v << 24);
}

void put32(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<uint8_t>(v >> (8 * i));
}

}  // namespace

PcapReader::PcapReader(std::istream& in) : in_(in) {
  uint8_t hdr[kPcapGlobalHeaderSize];
  in_.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  if (static_cast<size_t>(in_.gcount()) != sizeof hdr)
    throw FormatError("pcap: missing or short global header");
  uint32_t magic = le32(hdr);
  if (magic == kPcapMagic) {
    swapped_ = false;
  } else if (magic == bswap32(kPcapMagic)) {
    swapped_ = true;
  } else if (magic == kPcapMagicNanos || magic == bswap32(kPcapMagicNanos)) {
    throw FormatError("pcap: nanosecond-resolution files are not supported");
  } else {
    throw FormatError("pcap: bad magic number");
  }
  auto rd = [&](size_t off) {
    uint32_t v = le32(hdr + off);
    return swapped_ ? bswap32(v) : v;
  };
  uint32_t ver = rd(4);
  uint16_t major = static_cast<uint16_t>(swapped_ ? ver >> 16 : ver & 0xffff);
  if (major != 2) throw FormatError("pcap: unsupported major version " + std::to_string(major));
  snaplen_ = rd(16);
  link_type_ = rd(20);
}

std::optional<Packet> PcapReader::next() {
  if (eof_) return std::nullopt;
  uint8_t rec[kPcapRecordHeaderSize];
  in_.read(reinterpret_cast<char*>(rec), sizeof rec);
  size_t got = static_cast<size_t>(in_.gcount());
  if (got == 0) {
    eof_ = true;
    return std::nullopt;
  }
  if (got != sizeof rec) {
    eof_ = true;
    warnings_.push_back("pcap: truncated record header at end of file; record dropped");
    return std::nullopt;
  }
  auto rd = [&](size_t off) {
    uint32_t v = le32(rec + off);
    return swapped_ ? bswap32(v) : v;
  };
  Packet p;
  p.ts_sec = rd(0);
  p.ts_frac = rd(4);
  p.captured_len = rd(8);
  p.original_len = rd(12);
  if (p.ts_frac >= 1'000'000) throw FormatError("pcap: microsecond field out of range");
  if (p.captured_len > (1u << 26)) throw FormatError("pcap: implausible record length");
  p.data.resize(p.captured_len);
  in_.read(reinterpret_cast<char*>(p.data.data()), p.captured_len);
  if (static_cast<size_t>(in_.gcount()) != p.captured_len) {
    eof_ = true;
    warnings_.push_back("pcap: truncated final record; record dropped");
    return std::nullopt;
  }
  if (p.original_len < p.captured_len) {
    warnings_.push_back("pcap: record with orig_len < incl_len; orig_len raised");
    p.original_len = p.captured_len;
  }
  return p;
}

PcapWriter::PcapWriter(std::ostream& out, uint32_t link_type) : out_(out) {
  uint8_t hdr[kPcapGlobalHeaderSize];
  put32(hdr, kPcapMagic);
  hdr[4] = 2;
  hdr[5] = 0;
  hdr[6] = 4;
  hdr[7] = 0;
  put32(hdr + 8, 0);
  put32(hdr + 12, 0);
  put32(hdr + 16, kPcapSnaplen);
  put32(hdr + 20, link_type);
  out_.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
}

void PcapWriter::write(const Packet& p) {
  p.validate();
  write(p.ts(), p.data, p.original_len);
}

void PcapWriter::write(Micros ts, ByteView data, uint32_t original_len) {
  if (data.size() > original_len) throw UsageError("pcap: captured length exceeds original");
  uint8_t rec[kPcapRecordHeaderSize];
  put32(rec, static_cast<uint32_t>(ts / 1'000'000));
  put32(rec + 4, static_cast<uint32_t>(ts % 1'000'000));
  put32(rec + 8, static_cast<uint32_t>(data.size()));
  put32(rec + 12, original_len);
  out_.write(reinterpret_cast<const char*>(rec), sizeof rec);
  out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  ++records_;
}

PcapTrace read_pcap(std::istream& in) {
  PcapReader reader(in);
  PcapTrace t;
  t.link_type = reader.link_type();
  while (auto p = reader.next()) t.packets.push_back(std::move(*p));
  t.warnings = reader.warnings();
  return t;
}

PcapTrace read_pcap(ByteView bytes) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  return read_pcap(in);
}

PcapTrace read_pcap_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_pcap(in);
}

Bytes write_pcap(const std::vector<Packet>& packets, uint32_t link_type) {
  std::ostringstream out;
  PcapWriter w(out, link_type);
  for (const auto& p : packets) w.write(p);
  std::string s = std::move(out).str();
  return Bytes(s.begin(), s.end());
}

void write_pcap_file(const std::string& path, const std::vector<Packet>& packets,
                     uint32_t link_type) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot create " + path);
  PcapWriter w(out, link_type);
  for (const auto& p : packets) w.write(p);
}

}  // namespace flowvault
