#include "flowvault/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "flowvault/header_codec.hpp"
#include "flowvault/pcap.hpp"

namespace flowvault {

void TraceSpec::validate() const {
  if (!(duration >= 0) || (duration == 0 && max_packets == 0))
    throw UsageError("trace: need a positive duration or a packet cap");
  if (!(conn_rate > 0)) throw UsageError("trace: connection rate must be positive");
  if (!(tcp_share >= 0 && udp_share >= 0 && icmp_share >= 0 && arp_share >= 0) ||
      tcp_share + udp_share + icmp_share + arp_share <= 0)
    throw UsageError("trace: connection shares must be non-negative and not all zero");
  if (!(short_data_mean >= 0 && long_data_mean >= 0 && long_share >= 0 && long_share <= 1))
    throw UsageError("trace: bad flow length distribution");
  if (!(full_size_share >= 0 && full_size_share <= 1)) throw UsageError("trace: bad full_size_share");
  if (mss < 64 || mss > 8960) throw UsageError("trace: mss out of range");
  if (client_hosts == 0 || server_hosts == 0) throw UsageError("trace: host pools must be non-empty");
  if (client_hosts > (1u << 24) || server_hosts > (1u << 16)) throw UsageError("trace: host pool too large");
  if (payload == PayloadModel::kDup && !(dup_fraction >= 0 && dup_fraction < 1 && dup_gap > 0))
    throw UsageError("trace: dup needs 0 <= fraction < 1 and gap > 0");
  if (link_type != kLinkEthernet && link_type != kLinkRaw)
    throw UsageError("trace: link type must be ethernet (1) or raw (101)");
}

void TraceSpec::parse_payload(const std::string& text, TraceSpec& into) {
  if (text == "re") {
    into.payload = PayloadModel::kRe;
  } else if (text == "nr") {
    into.payload = PayloadModel::kNr;
  } else if (text.rfind("dup:", 0) == 0) {
    std::istringstream in(text.substr(4));
    double f = 0, g = 0;
    char sep = 0;
    if (!(in >> f >> sep >> g) || sep != ':' || !in.eof())
      throw UsageError("payload model dup needs dup:<fraction>:<gap>, got '" + text + "'");
    if (!(f >= 0 && f < 1 && g > 0)) throw UsageError("dup needs 0 <= fraction < 1 and gap > 0, got '" + text + "'");
    into.payload = PayloadModel::kDup;
    into.dup_fraction = f;
    into.dup_gap = g;
  } else {
    throw UsageError("payload model must be re, nr or dup:<fraction>:<gap>, got '" + text + "'");
  }
}

std::string TraceSpec::payload_str() const {
  switch (payload) {
    case PayloadModel::kRe:
      return "re";
    case PayloadModel::kNr:
      return "nr";
    case PayloadModel::kDup: {
      std::ostringstream o;
      o << "dup:" << dup_fraction << ":" << dup_gap;
      return o.str();
    }
  }
  return "?";
}

Bytes re_payload(uint8_t r, size_t len) {
  Bytes b(len);
  for (size_t i = 0; i < len; ++i) b[i] = static_cast<uint8_t>((i * r) & 0xff);
  return b;
}

namespace {

constexpr uint16_t kTcpPorts[] = {443, 80, 443, 443, 80, 8080, 22, 25, 993, 8443};
constexpr uint16_t kUdpPorts[] = {53, 53, 53, 123, 443, 5004};

void be16(Bytes& b, uint16_t v) {
  b.push_back(uint8_t(v >> 8));
  b.push_back(uint8_t(v));
}
void be32(Bytes& b, uint32_t v) {
  be16(b, uint16_t(v >> 16));
  be16(b, uint16_t(v));
}
void set16(Bytes& b, size_t at, uint16_t v) {
  b[at] = uint8_t(v >> 8);
  b[at + 1] = uint8_t(v);
}

void mac(Bytes& b, uint32_t ip) {
  b.push_back(0x02);
  b.push_back(0x00);
  be32(b, ip);
}

uint16_t l4_checksum(uint32_t src, uint32_t dst, uint8_t proto, ByteView segment) {
  Bytes pseudo;
  be32(pseudo, src);
  be32(pseudo, dst);
  pseudo.push_back(0);
  pseudo.push_back(proto);
  be16(pseudo, static_cast<uint16_t>(segment.size()));
  uint16_t c = checksum_finish(checksum_accumulate(segment, checksum_accumulate(pseudo)));
  if (proto == 17 && c == 0) c = 0xffff;
  return c;
}

uint64_t geometric(std::mt19937_64& rng, double mean) {
  if (mean <= 0) return 0;
  std::geometric_distribution<uint64_t> d(1.0 / (mean + 1.0));
  return d(rng);
}

}  // namespace

struct TraceGenerator::Conn {
  enum class Kind : uint8_t { kTcp, kUdp, kIcmp, kArp } kind = Kind::kTcp;
  struct Event {
    Micros offset;
    uint8_t from_server;
    uint8_t flags;  // TCP flags; for ICMP the type
    uint16_t len;   // payload bytes
  };

  Micros start = 0;
  uint32_t client = 0, server = 0;
  uint16_t cport = 0, sport = 0;
  uint64_t payload_seed = 0;
  bool replica = false;
  bool timestamps = false;
  std::vector<Event> events;
  size_t next = 0;

  std::mt19937_64 payload_rng;
  uint32_t seq[2] = {0, 0};
  uint16_t ip_id[2] = {0, 0};
  uint16_t window[2] = {0, 0};
  uint8_t ttl[2] = {64, 64};
  uint32_t tsval[2] = {0, 0};
  uint16_t icmp_ident = 0;
};

TraceGenerator::TraceGenerator(TraceSpec spec) : spec_(spec), rng_(spec.seed) {
  spec_.validate();
  const Micros start = seconds_to_micros(spec_.start);
  end_ = spec_.duration > 0 ? start + seconds_to_micros(spec_.duration) : UINT64_MAX;
  next_arrival_ = start;
}

TraceGenerator::~TraceGenerator() = default;

uint32_t TraceGenerator::pick_client() {
  std::uniform_int_distribution<uint32_t> d(0, spec_.client_hosts - 1);
  return 0x0a000000u + 1 + d(rng_);  // 10.0.0.1 upwards
}

uint32_t TraceGenerator::pick_server() {
  // Squared uniform skews popularity toward low indexes.
  std::uniform_real_distribution<double> u(0, 1);
  const double x = u(rng_);
  const uint32_t i = std::min<uint32_t>(spec_.server_hosts - 1, uint32_t(x * x * spec_.server_hosts));
  return 0x5db80000u + 1 + i;  // 93.184.0.1 upwards
}

void TraceGenerator::build_events(Conn& c) {
  using Kind = Conn::Kind;
  std::uniform_real_distribution<double> u(0, 1);
  auto ms = [](double v) { return static_cast<Micros>(v * 1000.0); };
  auto& ev = c.events;
  Micros t = 0;
  switch (c.kind) {
    case Kind::kTcp: {
      const Micros rtt = ms(2 + u(rng_) * 78);
      ev.push_back({t, 0, tcp_flag::kSyn, 0});
      t += rtt / 2;
      ev.push_back({t, 1, tcp_flag::kSyn | tcp_flag::kAck, 0});
      t += rtt / 2;
      ev.push_back({t, 0, tcp_flag::kAck, 0});
      t += ms(u(rng_));
      ev.push_back({t, 0, tcp_flag::kPsh | tcp_flag::kAck, uint16_t(80 + rng_() % 520)});
      const double mean = u(rng_) < spec_.long_share ? spec_.long_data_mean : spec_.short_data_mean;
      const uint64_t n = std::max<uint64_t>(1, geometric(rng_, mean));
      t += rtt / 2 + ms(std::exponential_distribution<double>(0.2)(rng_));
      for (uint64_t i = 0; i < n; ++i) {
        uint16_t len = u(rng_) < spec_.full_size_share ? spec_.mss : uint16_t(1 + rng_() % (spec_.mss - 1));
        uint8_t flags = tcp_flag::kAck | (i + 1 == n ? tcp_flag::kPsh : 0);
        ev.push_back({t, 1, flags, len});
        if (i % 2 == 1 || i + 1 == n) ev.push_back({t + rtt / 2, 0, tcp_flag::kAck, 0});
        t += ms(std::exponential_distribution<double>(3.0)(rng_));
        if (u(rng_) < 0.02) t += ms(500 + u(rng_) * 4500);  // application pause
      }
      t += rtt;
      if (u(rng_) < 0.05) {
        ev.push_back({t, 0, tcp_flag::kRst | tcp_flag::kAck, 0});
      } else {
        ev.push_back({t, 1, tcp_flag::kFin | tcp_flag::kAck, 0});
        ev.push_back({t + rtt / 2, 0, tcp_flag::kAck, 0});
        ev.push_back({t + rtt / 2 + ms(u(rng_)), 0, tcp_flag::kFin | tcp_flag::kAck, 0});
        ev.push_back({t + rtt, 1, tcp_flag::kAck, 0});
      }
      break;
    }
    case Kind::kUdp: {
      if (c.sport == 5004) {
        // Media-like stream from the server.
        const uint64_t n = 20 + geometric(rng_, 80);
        const uint16_t len = uint16_t(160 + rng_() % 1040);
        for (uint64_t i = 0; i < n; ++i) ev.push_back({i * 20000, 1, 0, len});
      } else {
        const uint64_t pairs = 1 + rng_() % 3;
        const Micros rtt = ms(1 + u(rng_) * 40);
        for (uint64_t i = 0; i < pairs; ++i) {
          ev.push_back({t, 0, 0, uint16_t(28 + rng_() % 40)});
          ev.push_back({t + rtt, 1, 0, uint16_t(44 + rng_() % 460)});
          t += rtt + ms(u(rng_) * 200);
        }
      }
      break;
    }
    case Kind::kIcmp: {
      const uint64_t n = 1 + rng_() % 5;
      const Micros rtt = ms(1 + u(rng_) * 60);
      for (uint64_t i = 0; i < n; ++i) {
        ev.push_back({i * 1000000, 0, 8, 56});
        ev.push_back({i * 1000000 + rtt, 1, 0, 56});
      }
      break;
    }
    case Kind::kArp:
      ev.push_back({0, 0, 1, 0});
      if (u(rng_) < 0.8) ev.push_back({ms(u(rng_) * 2), 1, 2, 0});
      break;
  }
  std::stable_sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });
}

void TraceGenerator::start_connection(Micros at, const Conn* replay_of) {
  auto c = std::make_unique<Conn>();
  std::uniform_real_distribution<double> u(0, 1);
  c->start = at;
  c->client = pick_client();
  c->cport = uint16_t(32768 + rng_() % 28000);
  if (replay_of) {
    c->kind = replay_of->kind;
    c->server = replay_of->server;
    c->sport = replay_of->sport;
    c->payload_seed = replay_of->payload_seed;
    c->events = replay_of->events;
    c->timestamps = replay_of->timestamps;
    c->replica = true;
    ++stats_.dup_connections;
  } else {
    const double total = spec_.tcp_share + spec_.udp_share + spec_.icmp_share + spec_.arp_share;
    const double x = u(rng_) * total;
    using Kind = Conn::Kind;
    if (x < spec_.tcp_share)
      c->kind = Kind::kTcp;
    else if (x < spec_.tcp_share + spec_.udp_share)
      c->kind = Kind::kUdp;
    else if (x < spec_.tcp_share + spec_.udp_share + spec_.icmp_share)
      c->kind = Kind::kIcmp;
    else
      c->kind = Kind::kArp;
    c->server = pick_server();
    if (c->kind == Kind::kTcp) c->sport = kTcpPorts[rng_() % std::size(kTcpPorts)];
    if (c->kind == Kind::kUdp) c->sport = kUdpPorts[rng_() % std::size(kUdpPorts)];
    c->payload_seed = rng_();
    c->timestamps = c->kind == Kind::kTcp && u(rng_) < 0.3;
    build_events(*c);
  }
  c->payload_rng.seed(c->payload_seed);
  c->seq[0] = static_cast<uint32_t>(rng_());
  c->seq[1] = static_cast<uint32_t>(rng_());
  c->ip_id[0] = static_cast<uint16_t>(rng_());
  c->ip_id[1] = static_cast<uint16_t>(rng_());
  c->window[0] = uint16_t(8192 + rng_() % 57000);
  c->window[1] = uint16_t(8192 + rng_() % 57000);
  c->ttl[0] = 64;
  c->ttl[1] = uint8_t(((c->server & 1) ? 128 : 64) - (c->server % 17 + 3));
  c->tsval[0] = static_cast<uint32_t>(rng_());
  c->tsval[1] = static_cast<uint32_t>(rng_());
  c->icmp_ident = static_cast<uint16_t>(rng_());
  ++stats_.connections;

  const uint64_t id = next_conn_++;
  if (!replay_of && c->kind == Conn::Kind::kTcp && spec_.payload == PayloadModel::kDup &&
      spec_.dup_fraction > 0) {
    // Replay with probability q so replicas are dup_fraction of TCP connections.
    const double q = spec_.dup_fraction / (1 - spec_.dup_fraction);
    const Micros when = at + seconds_to_micros(spec_.dup_gap);
    const double draw = u(rng_);
    if (draw < q && when < end_) {
      auto tmpl = std::make_unique<Conn>();
      tmpl->kind = c->kind;
      tmpl->server = c->server;
      tmpl->sport = c->sport;
      tmpl->payload_seed = c->payload_seed;
      tmpl->events = c->events;
      tmpl->timestamps = c->timestamps;
      replays_.push({when, order_++, id});
      templates_.emplace(id, std::move(tmpl));
    }
  }
  heap_.push({at + c->events.front().offset, order_++, id});
  conns_.emplace(id, std::move(c));
}

Packet TraceGenerator::emit(Conn& c) {
  using Kind = Conn::Kind;
  const Conn::Event e = c.events[c.next++];
  const int d = e.from_server;
  const uint32_t src = d ? c.server : c.client;
  const uint32_t dst = d ? c.client : c.server;
  Bytes f;
  f.reserve(64 + e.len);
  if (spec_.link_type == kLinkEthernet) {
    if (c.kind == Kind::kArp && e.flags == 1) {
      for (int i = 0; i < 6; ++i) f.push_back(0xff);
    } else {
      mac(f, dst);
    }
    mac(f, src);
    be16(f, c.kind == Kind::kArp ? 0x0806 : 0x0800);
  }

  if (c.kind == Kind::kArp) {
    if (spec_.link_type != kLinkEthernet) {
      // Raw IP links cannot carry ARP; emit a bare non-IP byte string instead.
      f.push_back(0x00);
      be32(f, src);
      be32(f, dst);
    } else {
      be16(f, 1);
      be16(f, 0x0800);
      f.push_back(6);
      f.push_back(4);
      be16(f, e.flags);
      mac(f, src);
      be32(f, src);
      if (e.flags == 1)
        for (int i = 0; i < 6; ++i) f.push_back(0);
      else
        mac(f, dst);
      be32(f, dst);
      while (f.size() < 60) f.push_back(0);
    }
    return Packet::make(c.start + e.offset, std::move(f));
  }

  auto payload = [&](size_t len) {
    Bytes p;
    if (len == 0) return p;
    if (spec_.payload == PayloadModel::kRe) {
      p = re_payload(static_cast<uint8_t>(c.payload_rng() & 0xff), len);
    } else {
      p.resize(len);
      size_t i = 0;
      while (i < len) {
        uint64_t r = c.payload_rng();
        for (int k = 0; k < 8 && i < len; ++k, r >>= 8) p[i++] = static_cast<uint8_t>(r);
      }
    }
    return p;
  };

  Bytes l4;
  uint8_t proto = 0;
  bool df = true;
  if (c.kind == Kind::kTcp) {
    proto = 6;
    Bytes opts;
    if (e.flags & tcp_flag::kSyn) {
      opts = {0x02, 0x04, uint8_t(spec_.mss >> 8), uint8_t(spec_.mss), 0x01, 0x03, 0x03, 0x07, 0x04, 0x02, 0x01, 0x01};
    } else if (c.timestamps) {
      c.tsval[d] += 1 + static_cast<uint32_t>(c.payload_rng() % 4);
      opts = {0x01, 0x01, 0x08, 0x0a};
      be32(opts, c.tsval[d]);
      be32(opts, c.tsval[1 - d]);
    }
    const Bytes data = payload(e.len);
    be16(l4, d ? c.sport : c.cport);
    be16(l4, d ? c.cport : c.sport);
    be32(l4, c.seq[d]);
    be32(l4, (e.flags & tcp_flag::kAck) ? c.seq[1 - d] : 0);
    l4.push_back(uint8_t(((20 + opts.size()) / 4) << 4));
    l4.push_back(e.flags);
    if (rng_() % 16 == 0) c.window[d] = uint16_t(c.window[d] + (rng_() % 2048) - 1024);
    be16(l4, c.window[d]);
    be16(l4, 0);
    be16(l4, 0);
    l4.insert(l4.end(), opts.begin(), opts.end());
    l4.insert(l4.end(), data.begin(), data.end());
    set16(l4, 16, l4_checksum(src, dst, proto, l4));
    c.seq[d] += e.len + ((e.flags & tcp_flag::kSyn) ? 1 : 0) + ((e.flags & tcp_flag::kFin) ? 1 : 0);
    stats_.payload_bytes += e.len;
    if (c.replica) stats_.dup_payload_bytes += e.len;
  } else if (c.kind == Kind::kUdp) {
    proto = 17;
    df = c.sport == 5004;
    const Bytes data = payload(e.len);
    be16(l4, d ? c.sport : c.cport);
    be16(l4, d ? c.cport : c.sport);
    be16(l4, uint16_t(8 + data.size()));
    be16(l4, 0);
    l4.insert(l4.end(), data.begin(), data.end());
    set16(l4, 6, l4_checksum(src, dst, proto, l4));
    stats_.payload_bytes += e.len;
  } else {
    proto = 1;
    df = false;
    const Bytes data = payload(e.len);
    l4.push_back(e.flags);
    l4.push_back(0);
    be16(l4, 0);
    be16(l4, c.icmp_ident);
    be16(l4, uint16_t(c.next / 2));
    l4.insert(l4.end(), data.begin(), data.end());
    set16(l4, 2, checksum_finish(checksum_accumulate(l4)));
    // OTHER_IP payload is everything past the IP header.
    stats_.payload_bytes += l4.size();
  }

  const size_t ip_at = f.size();
  f.push_back(0x45);
  f.push_back(0);
  be16(f, uint16_t(20 + l4.size()));
  be16(f, c.ip_id[d]++);
  be16(f, df ? 0x4000 : 0);
  f.push_back(c.ttl[d]);
  f.push_back(proto);
  be16(f, 0);
  be32(f, src);
  be32(f, dst);
  uint16_t ipsum = checksum_finish(checksum_accumulate(ByteView(f.data() + ip_at, 20)));
  if (rng_() % 1000 == 0) ipsum ^= 0x5a5a;  // occasional corrupt checksum
  set16(f, ip_at + 10, ipsum);
  f.insert(f.end(), l4.begin(), l4.end());
  return Packet::make(c.start + e.offset, std::move(f));
}

std::optional<Packet> TraceGenerator::next() {
  if (spec_.max_packets && stats_.packets >= spec_.max_packets) return std::nullopt;
  for (;;) {
    // Start every connection (new or replayed) due before the next packet.
    const Micros next_pkt = heap_.empty() ? UINT64_MAX : heap_.top().ts;
    const Micros next_replay = replays_.empty() ? UINT64_MAX : replays_.top().ts;
    const Micros next_arr = arrivals_done_ ? UINT64_MAX : next_arrival_;
    if (next_arr <= next_pkt && next_arr <= next_replay && next_arr != UINT64_MAX) {
      if (next_arrival_ >= end_) {
        arrivals_done_ = true;
        continue;
      }
      start_connection(next_arrival_, nullptr);
      const double gap = std::exponential_distribution<double>(spec_.conn_rate)(rng_);
      next_arrival_ += std::max<Micros>(1, seconds_to_micros(gap));
      continue;
    }
    if (next_replay <= next_pkt && next_replay != UINT64_MAX) {
      Pending p = replays_.top();
      replays_.pop();
      auto it = templates_.find(p.conn);
      start_connection(p.ts, it->second.get());
      templates_.erase(it);
      continue;
    }
    if (heap_.empty()) return std::nullopt;
    Pending p = heap_.top();
    heap_.pop();
    auto it = conns_.find(p.conn);
    Conn& c = *it->second;
    Packet pkt = emit(c);
    if (c.next < c.events.size())
      heap_.push({c.start + c.events[c.next].offset, order_++, p.conn});
    else
      conns_.erase(it);
    ++stats_.packets;
    stats_.bytes += pkt.data.size();
    return pkt;
  }
}

TraceStats generate_trace(const TraceSpec& spec, std::ostream& out) {
  TraceGenerator g(spec);
  PcapWriter w(out, spec.link_type);
  while (auto p = g.next()) w.write(*p);
  return g.stats();
}

std::vector<Packet> generate_packets(const TraceSpec& spec, TraceStats* stats) {
  TraceGenerator g(spec);
  std::vector<Packet> out;
  while (auto p = g.next()) out.push_back(std::move(*p));
  if (stats) *stats = g.stats();
  return out;
}

void CostModel::validate() const {
  if (!(fast_price > 0) || !(bulk_price > 0)) throw UsageError("cost model prices must be positive");
}

double storage_cost(const TierUsage& usage, const CostModel& model) {
  model.validate();
  return double(usage.fast_bytes) / 1e9 * model.fast_price + double(usage.bulk_bytes) / 1e9 * model.bulk_price;
}

double round_cents(double dollars) { return std::round(dollars * 100.0) / 100.0; }

namespace {

// Counts what would be stored without keeping it.
class CountingChunkStore : public ChunkStore {
 public:
  ChunkLocation append_chunk(ByteView record) override { return add(record.size()); }
  ChunkLocation add(uint64_t n) {
    ChunkLocation loc{0, bytes_};
    bytes_ += n;
    return loc;
  }
  Bytes read_chunk(ChunkLocation) const override { throw DataUnavailable("counting store holds no data"); }
  uint64_t bytes() const { return bytes_; }

 private:
  uint64_t bytes_ = 0;
};

struct ReplayFlow {
  Micros now;
  uint64_t header_bytes;
  std::vector<PreparedChunk> chunks;
};

}  // namespace

SweepReport dedup_window_sweep(const PacketSource& source, const SweepOptions& opt) {
  opt.cost.validate();
  opt.grouper.validate();
  if (opt.configs.empty() || opt.windows.empty()) throw UsageError("sweep needs at least one config and one window");
  for (double w : opt.windows)
    if (!(w >= 0)) throw UsageError("sweep windows must be non-negative");
  SweepReport report;
  for (const auto& cfg : opt.configs) {
    cfg.validate();
    // One pass: group, chunk and hash; keep only what the replay needs.
    std::vector<ReplayFlow> flows;
    FlowGrouper grouper(opt.grouper);
    // Keep record sizes before dropping the bytes.
    std::vector<std::vector<uint32_t>> sizes;
    auto take_sized = [&](Flow&& f) {
      ReplayFlow r;
      r.now = f.last_ts;
      r.header_bytes = compress_headers(f, opt.compress_chunks).serialize().size() + 8;
      PayloadStream ps = assemble_payload_stream(f);
      r.chunks = prepare_chunks(ps.bytes, chunk_stream(ps.bytes, cfg), opt.compress_chunks);
      std::vector<uint32_t> sz;
      for (auto& c : r.chunks) {
        sz.push_back(static_cast<uint32_t>(c.record.size()));
        Bytes().swap(c.record);
      }
      sizes.push_back(std::move(sz));
      flows.push_back(std::move(r));
    };
    source([&](Packet p) {
      ParsedHeader h = parse_headers(p, opt.link_type);
      for (auto& f : grouper.ingest(std::move(p), std::move(h))) take_sized(std::move(f));
    });
    for (auto& f : grouper.flush_all()) take_sized(std::move(f));

    for (double w : opt.windows) {
      SweepPoint pt;
      pt.chunking = cfg;
      pt.window_seconds = w;
      MemoryChunkIndex index(seconds_to_micros(w));
      CountingChunkStore store;
      uint64_t refs_bytes = 0, header_bytes = 0;
      for (size_t i = 0; i < flows.size(); ++i) {
        const ReplayFlow& f = flows[i];
        index.expire(f.now);
        header_bytes += f.header_bytes;
        for (size_t k = 0; k < f.chunks.size(); ++k) {
          const PreparedChunk& c = f.chunks[k];
          const uint32_t rec = sizes[i][k];
          ++pt.chunks;
          pt.raw_bytes += c.raw_len;
          pt.compressed_bytes += rec;
          refs_bytes += 8 + varint_size(c.raw_len);
          if (index.get(c.hash)) {
            ++pt.duplicate_chunks;
            pt.duplicate_raw_bytes += c.raw_len;
            pt.duplicate_compressed_bytes += rec;
          } else {
            index.put(c.hash, store.add(rec), f.now);
          }
        }
      }
      pt.peak_index_entries = index.peak_size();
      pt.bulk_bytes = store.bytes();
      pt.fast_bytes = header_bytes + refs_bytes + pt.peak_index_entries * opt.index_entry_bytes;
      pt.cost = storage_cost({pt.fast_bytes, pt.bulk_bytes}, opt.cost);
      report.points.push_back(pt);
    }
  }
  return report;
}

SweepReport dedup_window_sweep(const std::vector<Packet>& trace, const SweepOptions& options) {
  return dedup_window_sweep(
      [&](const std::function<void(Packet)>& sink) {
        for (const auto& p : trace) sink(p);
      },
      options);
}

SweepReport dedup_window_sweep_file(const std::string& path, SweepOptions options) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw UsageError("cannot open input " + path);
    options.link_type = PcapReader(probe).link_type();
  }
  return dedup_window_sweep(
      [&](const std::function<void(Packet)>& sink) {
        std::ifstream in(path, std::ios::binary);
        PcapReader r(in);
        while (auto p = r.next()) sink(std::move(*p));
      },
      options);
}

std::string SweepReport::to_text() const {
  std::ostringstream o;
  o << std::left << std::setw(12) << "chunking" << std::right << std::setw(10) << "window_s" << std::setw(10)
    << "chunks" << std::setw(10) << "dup" << std::setw(10) << "redund%" << std::setw(11) << "redundC%"
    << std::setw(12) << "peak_index" << std::setw(14) << "fast_bytes" << std::setw(14) << "bulk_bytes"
    << std::setw(12) << "cost_usd" << "\n";
  o << std::fixed;
  for (const auto& p : points) {
    o << std::left << std::setw(12) << p.chunking.str() << std::right << std::setw(10) << std::setprecision(1)
      << p.window_seconds << std::setw(10) << p.chunks << std::setw(10) << p.duplicate_chunks << std::setw(10)
      << std::setprecision(2) << 100 * p.redundancy_raw() << std::setw(11) << 100 * p.redundancy_compressed()
      << std::setw(12) << p.peak_index_entries << std::setw(14) << p.fast_bytes << std::setw(14) << p.bulk_bytes
      << std::setw(12) << std::setprecision(6) << p.cost << "\n";
  }
  return o.str();
}

std::string SweepReport::to_csv() const {
  std::ostringstream o;
  o << "chunking,window_s,chunks,duplicate_chunks,raw_bytes,duplicate_raw_bytes,compressed_bytes,"
       "duplicate_compressed_bytes,redundancy_raw,redundancy_compressed,peak_index_entries,fast_bytes,"
       "bulk_bytes,cost_usd\n";
  for (const auto& p : points) {
    o << p.chunking.str() << ',' << p.window_seconds << ',' << p.chunks << ',' << p.duplicate_chunks << ','
      << p.raw_bytes << ',' << p.duplicate_raw_bytes << ',' << p.compressed_bytes << ','
      << p.duplicate_compressed_bytes << ',' << p.redundancy_raw() << ',' << p.redundancy_compressed() << ','
      << p.peak_index_entries << ',' << p.fast_bytes << ',' << p.bulk_bytes << ',' << p.cost << "\n";
  }
  return o.str();
}

}  // namespace flowvault
