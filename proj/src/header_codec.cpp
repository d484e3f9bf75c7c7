#include "flowvault/header_codec.hpp"

#include <algorithm>

namespace flowvault {

namespace {

constexpr size_t kFlagsA = 0;
constexpr size_t kFlagsB = 1;
constexpr size_t kFlagsC = 2;

// flagsA
constexpr uint8_t kARank = 1 << 2;
constexpr uint8_t kACaptured = 1 << 3;
constexpr uint8_t kALink = 1 << 4;
constexpr uint8_t kAVihl = 1 << 5;
constexpr uint8_t kATos = 1 << 6;
constexpr uint8_t kAId = 1 << 7;
// flagsB
constexpr uint8_t kBFrag = 1 << 0;
constexpr uint8_t kBTtl = 1 << 1;
constexpr uint8_t kBTotLen = 1 << 2;
constexpr uint8_t kBIpCsum = 1 << 3;
constexpr uint8_t kBIpOpts = 1 << 4;
// flagsC (TCP)
constexpr uint8_t kCSeq = 1 << 0;
constexpr uint8_t kCAck = 1 << 1;
constexpr uint8_t kCOffFlags = 1 << 2;
constexpr uint8_t kCWindow = 1 << 3;
constexpr uint8_t kCUrgent = 1 << 4;
constexpr int kCOptShift = 5;  // 2 bits: 0 same, 1 xor, 2 literal
// flagsC (UDP)
constexpr uint8_t kCUdpLen = 1 << 0;

constexpr uint8_t kDefaultVihl = 0x45;
constexpr uint8_t kDefaultTtl = 64;
constexpr uint16_t kDefaultFragment = 0x4000;  // DF
constexpr uint16_t kDefaultOffFlags = 0x5010;  // data offset 5, ACK

// Predictions carried from one packet to the next within a flow. The
// initial values are the protocol-default predictions for a first packet.
struct Predictor {
  Micros ts = 0;
  Bytes link;
  uint8_t tos = 0;
  uint16_t id = 0;
  uint16_t fragment = kDefaultFragment;
  uint8_t ttl = kDefaultTtl;
  Bytes ip_options;
  uint32_t seq = 0;
  uint32_t ack = 0;
  uint16_t off_flags = kDefaultOffFlags;
  uint16_t window = 0;
  Bytes tcp_options;

  void after_ip(const Ipv4Fields& ip, const Bytes& link_header) {
    link = link_header;
    tos = ip.tos;
    id = static_cast<uint16_t>(ip.id + 1);
    fragment = static_cast<uint16_t>((ip.flags << 13) | ip.frag_offset);
    ttl = ip.ttl;
    if (ip.ihl > 5) ip_options = ip.options;
  }

  void after_tcp(const Ipv4Fields& ip, const TcpFields& tcp) {
    int64_t seglen = int64_t{ip.total_length} - int64_t(ip.header_len()) - int64_t(tcp.header_len());
    if (seglen < 0) seglen = 0;
    seglen += (tcp.flags & tcp_flag::kSyn) ? 1 : 0;
    seglen += (tcp.flags & tcp_flag::kFin) ? 1 : 0;
    seq = tcp.seq + static_cast<uint32_t>(seglen);
    ack = tcp.ack;
    off_flags = static_cast<uint16_t>(((tcp.data_offset << 4 | tcp.reserved) << 8) | tcp.flags);
    window = tcp.window;
    if (tcp.data_offset > 5) tcp_options = tcp.options;
  }
};

int64_t wrap32(uint32_t actual, uint32_t predicted) {
  return static_cast<int32_t>(actual - predicted);
}
int64_t wrap16(uint16_t actual, uint16_t predicted) {
  return static_cast<int16_t>(static_cast<uint16_t>(actual - predicted));
}

class Emitter {
 public:
  Emitter(ResidualStreams& s, std::vector<ResidualField>* trace) : s_(s), trace_(trace) {}

  void varint(HeaderField f, ResidualMode mode, uint64_t v) {
    size_t at = s_.field(f).size();
    ByteWriter(s_.field(f)).varint(v);
    record(f, mode, at);
  }
  void svarint(HeaderField f, int64_t v) { varint(f, ResidualMode::kDelta, zigzag_encode(v)); }
  void u8(HeaderField f, uint8_t v) {
    size_t at = s_.field(f).size();
    s_.field(f).push_back(v);
    record(f, ResidualMode::kLiteral, at);
  }
  void u16(HeaderField f, uint16_t v) {
    size_t at = s_.field(f).size();
    ByteWriter(s_.field(f)).u16be(v);
    record(f, ResidualMode::kLiteral, at);
  }
  void bytes(HeaderField f, ResidualMode mode, ByteView b) {
    size_t at = s_.field(f).size();
    ByteWriter(s_.field(f)).bytes(b);
    record(f, mode, at);
  }
  void ok(HeaderField f) {
    if (trace_) trace_->push_back({f, ResidualMode::kPredictedOk, {}});
  }

 private:
  void record(HeaderField f, ResidualMode mode, size_t at) {
    if (!trace_) return;
    const Bytes& col = s_.field(f);
    trace_->push_back({f, mode, Bytes(col.begin() + static_cast<ptrdiff_t>(at), col.end())});
  }

  ResidualStreams& s_;
  std::vector<ResidualField>* trace_;
};

void encode_packet(const GroupedPacket& gp, Predictor& pred, ResidualStreams& s,
                   std::vector<ResidualField>* trace) {
  Emitter e(s, trace);
  const Packet& pkt = gp.packet;
  const ParsedHeader& h = gp.header;
  uint8_t a = static_cast<uint8_t>(h.parse_class);

  const Micros ts = pkt.ts();
  e.svarint(HeaderField::kTimestamp, static_cast<int64_t>(ts - pred.ts));
  pred.ts = ts;
  if (gp.tie_rank != 0) {
    a |= kARank;
    e.varint(HeaderField::kTieRank, ResidualMode::kLiteral, gp.tie_rank);
  }
  e.varint(HeaderField::kOriginalLen, ResidualMode::kLiteral, pkt.original_len);
  if (pkt.captured_len != pkt.original_len) {
    a |= kACaptured;
    e.varint(HeaderField::kCapturedLen, ResidualMode::kDelta, pkt.original_len - pkt.captured_len);
  } else {
    e.ok(HeaderField::kCapturedLen);
  }

  if (h.parse_class == ParseClass::kNonIp) {
    e.bytes(HeaderField::kRawHeader, ResidualMode::kLiteral, h.raw);
    s.flags(kFlagsA).push_back(a);
    return;
  }

  const Ipv4Fields& ip = h.ip;
  if (h.link_header != pred.link) {
    a |= kALink;
    Bytes lit;
    ByteWriter w(lit);
    w.varint(h.link_header.size());
    w.bytes(h.link_header);
    e.bytes(HeaderField::kLinkHeader, ResidualMode::kLiteral, lit);
  } else {
    e.ok(HeaderField::kLinkHeader);
  }
  const uint8_t vihl = static_cast<uint8_t>((ip.version << 4) | ip.ihl);
  if (vihl != kDefaultVihl) {
    a |= kAVihl;
    e.u8(HeaderField::kVersionIhl, vihl);
  } else {
    e.ok(HeaderField::kVersionIhl);
  }
  if (ip.tos != pred.tos) {
    a |= kATos;
    e.u8(HeaderField::kTos, ip.tos);
  } else {
    e.ok(HeaderField::kTos);
  }
  if (ip.id != pred.id) {
    a |= kAId;
    e.svarint(HeaderField::kIpId, wrap16(ip.id, pred.id));
  } else {
    e.ok(HeaderField::kIpId);
  }
  s.flags(kFlagsA).push_back(a);

  uint8_t b = 0;
  const uint16_t fragment = static_cast<uint16_t>((ip.flags << 13) | ip.frag_offset);
  if (fragment != pred.fragment) {
    b |= kBFrag;
    e.u16(HeaderField::kFragment, fragment);
  } else {
    e.ok(HeaderField::kFragment);
  }
  if (ip.ttl != pred.ttl) {
    b |= kBTtl;
    e.u8(HeaderField::kTtl, ip.ttl);
  } else {
    e.ok(HeaderField::kTtl);
  }
  const int64_t predicted_len = int64_t{pkt.original_len} - int64_t(h.link_header.size());
  if (ip.total_length != predicted_len) {
    b |= kBTotLen;
    e.svarint(HeaderField::kTotalLength, ip.total_length - predicted_len);
  } else {
    e.ok(HeaderField::kTotalLength);
  }
  if (ip.checksum != ipv4_header_checksum(ip)) {
    b |= kBIpCsum;
    e.u16(HeaderField::kIpChecksum, ip.checksum);
  } else {
    e.ok(HeaderField::kIpChecksum);
  }
  if (ip.ihl > 5) {
    if (ip.options != pred.ip_options) {
      b |= kBIpOpts;
      e.bytes(HeaderField::kIpOptions, ResidualMode::kLiteral, ip.options);
    } else {
      e.ok(HeaderField::kIpOptions);
    }
  }
  s.flags(kFlagsB).push_back(b);
  pred.after_ip(ip, h.link_header);

  if (h.parse_class == ParseClass::kTcp) {
    const TcpFields& t = h.tcp;
    uint8_t c = 0;
    if (t.seq != pred.seq) {
      c |= kCSeq;
      e.svarint(HeaderField::kTcpSeq, wrap32(t.seq, pred.seq));
    } else {
      e.ok(HeaderField::kTcpSeq);
    }
    if (t.ack != pred.ack) {
      c |= kCAck;
      e.svarint(HeaderField::kTcpAck, wrap32(t.ack, pred.ack));
    } else {
      e.ok(HeaderField::kTcpAck);
    }
    const uint16_t off_flags =
        static_cast<uint16_t>(((t.data_offset << 4 | t.reserved) << 8) | t.flags);
    if (off_flags != pred.off_flags) {
      c |= kCOffFlags;
      e.u16(HeaderField::kTcpOffsetFlags, off_flags);
    } else {
      e.ok(HeaderField::kTcpOffsetFlags);
    }
    if (t.window != pred.window) {
      c |= kCWindow;
      e.svarint(HeaderField::kTcpWindow, wrap16(t.window, pred.window));
    } else {
      e.ok(HeaderField::kTcpWindow);
    }
    if (t.urgent != 0) {
      c |= kCUrgent;
      e.u16(HeaderField::kTcpUrgent, t.urgent);
    } else {
      e.ok(HeaderField::kTcpUrgent);
    }
    if (t.data_offset > 5) {
      if (t.options == pred.tcp_options) {
        e.ok(HeaderField::kTcpOptions);
      } else if (t.options.size() == pred.tcp_options.size()) {
        c |= 1 << kCOptShift;
        Bytes x(t.options.size());
        for (size_t i = 0; i < x.size(); ++i) x[i] = t.options[i] ^ pred.tcp_options[i];
        e.bytes(HeaderField::kTcpOptions, ResidualMode::kDelta, x);
      } else {
        c |= 2 << kCOptShift;
        e.bytes(HeaderField::kTcpOptions, ResidualMode::kLiteral, t.options);
      }
    }
    e.u16(HeaderField::kTransportChecksum, t.checksum);
    s.flags(kFlagsC).push_back(c);
    pred.after_tcp(ip, t);
  } else if (h.parse_class == ParseClass::kUdp) {
    uint8_t c = 0;
    const int64_t predicted_udp = int64_t{ip.total_length} - int64_t(ip.header_len());
    if (h.udp.length != predicted_udp) {
      c |= kCUdpLen;
      e.svarint(HeaderField::kUdpLength, h.udp.length - predicted_udp);
    } else {
      e.ok(HeaderField::kUdpLength);
    }
    e.u16(HeaderField::kTransportChecksum, h.udp.checksum);
    s.flags(kFlagsC).push_back(c);
  }
}

}  // namespace

Bytes ResidualStreams::serialize() const {
  uint64_t present = 0;
  for (size_t i = 0; i < kColumns; ++i)
    if (!columns[i].empty()) present |= uint64_t{1} << i;
  ByteWriter w;
  w.varint(present);
  for (const auto& c : columns)
    if (!c.empty()) w.varint(c.size());
  for (const auto& c : columns) w.bytes(c);
  return w.take();
}

ResidualStreams ResidualStreams::parse(ByteView bytes) {
  ByteReader r(bytes, "residual stream");
  ResidualStreams s;
  uint64_t present = r.varint();
  if (present >> kColumns) throw FormatError("residual stream: unknown columns");
  std::array<uint64_t, kColumns> lens{};
  for (size_t i = 0; i < kColumns; ++i)
    if (present & (uint64_t{1} << i)) lens[i] = r.varint();
  for (size_t i = 0; i < kColumns; ++i) {
    ByteView v = r.bytes(lens[i]);
    s.columns[i].assign(v.begin(), v.end());
  }
  if (!r.done()) throw FormatError("residual stream: trailing bytes");
  return s;
}

size_t ResidualStreams::total_size() const {
  size_t n = 0;
  for (const auto& c : columns) n += c.size();
  return n;
}

ResidualStreams encode_residuals(const Flow& flow,
                                 std::vector<std::vector<ResidualField>>* trace) {
  ResidualStreams s;
  Predictor pred;
  pred.ts = flow.packets.empty() ? 0 : flow.packets.front().packet.ts();
  for (const auto& gp : flow.packets) {
    std::vector<ResidualField>* t = nullptr;
    if (trace) t = &trace->emplace_back();
    encode_packet(gp, pred, s, t);
  }
  return s;
}

CompressedHeaderBlock compress_headers(const Flow& flow, bool dictionary_pass) {
  if (flow.packets.empty()) throw UsageError("compress_headers: empty flow");
  CompressedHeaderBlock block;
  block.key = flow.key;
  block.packet_count = static_cast<uint32_t>(flow.packets.size());
  block.first_ts = flow.packets.front().packet.ts();
  Bytes residuals = encode_residuals(flow).serialize();
  block.residual_raw_len = static_cast<uint32_t>(residuals.size());
  PackedBlock packed = pack_block(residuals, dictionary_pass);
  block.residual_codec = packed.id;
  block.encoded = std::move(packed.bytes);
  return block;
}

Bytes CompressedHeaderBlock::serialize() const {
  ByteWriter w;
  w.u8(kMagic);
  w.u8(kVersion);
  key.encode(w);
  w.varint(packet_count);
  w.u64le(first_ts);
  w.varint(chunk_refs.size());
  for (const auto& ref : chunk_refs) {
    w.u64le(ref.location.pack());
    w.varint(ref.raw_len);
  }
  w.u8(static_cast<uint8_t>(residual_codec));
  w.varint(residual_raw_len);
  w.varint(encoded.size());
  w.bytes(encoded);
  return w.take();
}

namespace {

void check_prefix(ByteReader& r) {
  if (r.u8() != CompressedHeaderBlock::kMagic) throw IntegrityError("header block: bad magic");
  if (r.u8() != CompressedHeaderBlock::kVersion)
    throw IntegrityError("header block: unsupported version");
}

}  // namespace

FlowKey CompressedHeaderBlock::peek_key(ByteView bytes) {
  try {
    ByteReader r(bytes, "header block");
    check_prefix(r);
    return FlowKey::decode(r);
  } catch (const FormatError& e) {
    throw IntegrityError(e.what());
  }
}

CompressedHeaderBlock CompressedHeaderBlock::parse(ByteView bytes) {
  try {
    ByteReader r(bytes, "header block");
    check_prefix(r);
    CompressedHeaderBlock b;
    b.key = FlowKey::decode(r);
    b.packet_count = static_cast<uint32_t>(r.varint());
    if (b.packet_count == 0) throw IntegrityError("header block: zero packets");
    b.first_ts = r.u64le();
    uint64_t nrefs = r.varint();
    if (nrefs > r.remaining()) throw IntegrityError("header block: bad chunk count");
    b.chunk_refs.reserve(nrefs);
    for (uint64_t i = 0; i < nrefs; ++i) {
      ChunkRef ref;
      ref.location = ChunkLocation::unpack(r.u64le());
      ref.raw_len = static_cast<uint32_t>(r.varint());
      b.chunk_refs.push_back(ref);
    }
    uint8_t codec = r.u8();
    if (codec > static_cast<uint8_t>(CompressorId::kDeflate))
      throw IntegrityError("header block: unknown residual codec");
    b.residual_codec = static_cast<CompressorId>(codec);
    b.residual_raw_len = static_cast<uint32_t>(r.varint());
    uint64_t n = r.varint();
    ByteView enc = r.bytes(n);
    b.encoded.assign(enc.begin(), enc.end());
    if (!r.done()) throw IntegrityError("header block: trailing bytes");
    return b;
  } catch (const FormatError& e) {
    throw IntegrityError(e.what());
  }
}

namespace {

class ColumnReaders {
 public:
  explicit ColumnReaders(const ResidualStreams& s) {
    for (size_t i = 0; i < ResidualStreams::kColumns; ++i)
      readers_.emplace_back(ByteView(s.columns[i]), "residual column");
  }
  ByteReader& flags(size_t i) { return readers_[i]; }
  ByteReader& field(HeaderField f) {
    return readers_[ResidualStreams::kFlagColumns + static_cast<size_t>(f)];
  }
  bool all_done() const {
    return std::all_of(readers_.begin(), readers_.end(), [](const ByteReader& r) { return r.done(); });
  }

 private:
  std::vector<ByteReader> readers_;
};

DecodedHeader decode_packet(const FlowKey& key, Predictor& pred, ColumnReaders& in) {
  DecodedHeader out;
  const uint8_t a = in.flags(kFlagsA).u8();
  const auto cls = static_cast<ParseClass>(a & 0x03);
  out.ts = pred.ts + static_cast<Micros>(in.field(HeaderField::kTimestamp).svarint());
  pred.ts = out.ts;
  if (a & kARank) out.tie_rank = static_cast<uint32_t>(in.field(HeaderField::kTieRank).varint());
  out.original_len = static_cast<uint32_t>(in.field(HeaderField::kOriginalLen).varint());
  out.captured_len = out.original_len;
  if (a & kACaptured) {
    uint64_t d = in.field(HeaderField::kCapturedLen).varint();
    if (d > out.original_len) throw IntegrityError("header block: bad captured length");
    out.captured_len = out.original_len - static_cast<uint32_t>(d);
  }

  ParsedHeader h;
  h.parse_class = cls;
  if (cls == ParseClass::kNonIp) {
    ByteView raw = in.field(HeaderField::kRawHeader).bytes(out.captured_len);
    h.raw.assign(raw.begin(), raw.end());
    out.header = std::move(h.raw);
    out.payload_len = 0;
    return out;
  }

  if (a & kALink) {
    ByteReader& r = in.field(HeaderField::kLinkHeader);
    ByteView v = r.bytes(r.varint());
    h.link_header.assign(v.begin(), v.end());
  } else {
    h.link_header = pred.link;
  }
  Ipv4Fields& ip = h.ip;
  uint8_t vihl = (a & kAVihl) ? in.field(HeaderField::kVersionIhl).u8() : kDefaultVihl;
  ip.version = vihl >> 4;
  ip.ihl = vihl & 0x0f;
  ip.tos = (a & kATos) ? in.field(HeaderField::kTos).u8() : pred.tos;
  ip.id = (a & kAId)
              ? static_cast<uint16_t>(pred.id + in.field(HeaderField::kIpId).svarint())
              : pred.id;

  const uint8_t b = in.flags(kFlagsB).u8();
  uint16_t fragment = (b & kBFrag) ? in.field(HeaderField::kFragment).u16be() : pred.fragment;
  ip.flags = static_cast<uint8_t>(fragment >> 13);
  ip.frag_offset = fragment & 0x1fff;
  ip.ttl = (b & kBTtl) ? in.field(HeaderField::kTtl).u8() : pred.ttl;
  int64_t total = int64_t{out.original_len} - int64_t(h.link_header.size());
  if (b & kBTotLen) total += in.field(HeaderField::kTotalLength).svarint();
  ip.total_length = static_cast<uint16_t>(total);
  ip.protocol = key.protocol;
  ip.src = key.src_ip;
  ip.dst = key.dst_ip;
  if (ip.ihl > 5) {
    if (b & kBIpOpts) {
      ByteView v = in.field(HeaderField::kIpOptions).bytes((size_t{ip.ihl} - 5) * 4);
      ip.options.assign(v.begin(), v.end());
    } else {
      ip.options = pred.ip_options;
    }
    if (ip.options.size() != (size_t{ip.ihl} - 5) * 4)
      throw IntegrityError("header block: IP options length mismatch");
  }
  ip.checksum = (b & kBIpCsum) ? in.field(HeaderField::kIpChecksum).u16be()
                               : ipv4_header_checksum(ip);
  pred.after_ip(ip, h.link_header);

  if (cls == ParseClass::kTcp) {
    TcpFields& t = h.tcp;
    const uint8_t c = in.flags(kFlagsC).u8();
    t.src_port = key.src_port;
    t.dst_port = key.dst_port;
    t.seq = (c & kCSeq) ? pred.seq + static_cast<uint32_t>(in.field(HeaderField::kTcpSeq).svarint())
                        : pred.seq;
    t.ack = (c & kCAck) ? pred.ack + static_cast<uint32_t>(in.field(HeaderField::kTcpAck).svarint())
                        : pred.ack;
    uint16_t off_flags =
        (c & kCOffFlags) ? in.field(HeaderField::kTcpOffsetFlags).u16be() : pred.off_flags;
    t.data_offset = static_cast<uint8_t>(off_flags >> 12);
    t.reserved = (off_flags >> 8) & 0x0f;
    t.flags = static_cast<uint8_t>(off_flags);
    t.window = (c & kCWindow)
                   ? static_cast<uint16_t>(pred.window + in.field(HeaderField::kTcpWindow).svarint())
                   : pred.window;
    t.urgent = (c & kCUrgent) ? in.field(HeaderField::kTcpUrgent).u16be() : 0;
    if (t.data_offset < 5) throw IntegrityError("header block: bad TCP data offset");
    if (t.data_offset > 5) {
      const size_t n = (size_t{t.data_offset} - 5) * 4;
      const int mode = (c >> kCOptShift) & 0x03;
      if (mode == 0) {
        t.options = pred.tcp_options;
      } else {
        ByteView v = in.field(HeaderField::kTcpOptions).bytes(n);
        t.options.assign(v.begin(), v.end());
        if (mode == 1) {
          if (pred.tcp_options.size() != n) throw IntegrityError("header block: bad option delta");
          for (size_t i = 0; i < n; ++i) t.options[i] ^= pred.tcp_options[i];
        }
      }
      if (t.options.size() != n) throw IntegrityError("header block: TCP options length mismatch");
    }
    t.checksum = in.field(HeaderField::kTransportChecksum).u16be();
    pred.after_tcp(ip, t);
  } else if (cls == ParseClass::kUdp) {
    const uint8_t c = in.flags(kFlagsC).u8();
    h.udp.src_port = key.src_port;
    h.udp.dst_port = key.dst_port;
    int64_t len = int64_t{ip.total_length} - int64_t(ip.header_len());
    if (c & kCUdpLen) len += in.field(HeaderField::kUdpLength).svarint();
    h.udp.length = static_cast<uint16_t>(len);
    h.udp.checksum = in.field(HeaderField::kTransportChecksum).u16be();
  }

  serialize_headers(h, out.header);
  if (out.header.size() > out.captured_len)
    throw IntegrityError("header block: header longer than captured length");
  out.payload_len = out.captured_len - out.header.size();
  return out;
}

}  // namespace

std::vector<DecodedHeader> decompress_headers(const CompressedHeaderBlock& block) {
  try {
    Bytes raw = unpack_block(block.residual_codec, block.encoded, block.residual_raw_len);
    ResidualStreams s = ResidualStreams::parse(raw);
    ColumnReaders in(s);
    Predictor pred;
    pred.ts = block.first_ts;
    std::vector<DecodedHeader> out;
    out.reserve(block.packet_count);
    for (uint32_t i = 0; i < block.packet_count; ++i) out.push_back(decode_packet(block.key, pred, in));
    if (!in.all_done()) throw IntegrityError("header block: residual columns not fully consumed");
    return out;
  } catch (const FormatError& e) {
    throw IntegrityError(std::string("header block: ") + e.what());
  }
}

}  // namespace flowvault
