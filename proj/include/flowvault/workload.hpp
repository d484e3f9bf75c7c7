#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowvault/chunking.hpp"
#include "flowvault/flow_grouper.hpp"
#include "flowvault/store.hpp"

namespace flowvault {

enum class PayloadModel : uint8_t { kRe, kNr, kDup };

struct TraceSpec {
  uint64_t seed = 1;
  double start = 0;              // seconds
  double duration = 60;          // seconds of connection arrivals; 0 = until max_packets
  uint64_t max_packets = 0;      // 0 = no cap
  double conn_rate = 50;         // new connections per second

  // Connection mix (normalized).
  double tcp_share = 0.80;
  double udp_share = 0.14;
  double icmp_share = 0.04;
  double arp_share = 0.02;

  // TCP response length: a short/long mixture of geometric counts.
  double short_data_mean = 3;
  double long_data_mean = 40;
  double long_share = 0.3;
  double full_size_share = 0.72;  // data segments at full MSS
  uint16_t mss = 1460;

  uint32_t client_hosts = 2000;
  uint32_t server_hosts = 200;

  PayloadModel payload = PayloadModel::kNr;
  double dup_fraction = 0;  // DUP: share of TCP connections replaying an earlier one
  double dup_gap = 0;       // DUP: seconds between original and replay

  uint32_t link_type = kLinkEthernet;  // kLinkEthernet or kLinkRaw

  void validate() const;
  // "re", "nr", "dup:<fraction>:<gap>"
  static void parse_payload(const std::string& text, TraceSpec& into);
  std::string payload_str() const;
};

struct TraceStats {
  uint64_t packets = 0;
  uint64_t connections = 0;
  uint64_t bytes = 0;               // captured packet bytes
  uint64_t payload_bytes = 0;       // bytes past the parsed headers
  uint64_t dup_connections = 0;
  uint64_t dup_payload_bytes = 0;   // payload bytes emitted by replayed connections

  double mean_packet_size() const { return packets ? double(bytes) / packets : 0; }
};

// Streaming, seeded generator. Packets come out in non-decreasing
// timestamp order; the same spec always yields the same packets.
class TraceGenerator {
 public:
  explicit TraceGenerator(TraceSpec spec);
  ~TraceGenerator();
  TraceGenerator(const TraceGenerator&) = delete;
  TraceGenerator& operator=(const TraceGenerator&) = delete;

  std::optional<Packet> next();
  const TraceStats& stats() const { return stats_; }
  const TraceSpec& spec() const { return spec_; }

 private:
  struct Conn;
  struct Pending {
    Micros ts;
    uint64_t order;
    uint64_t conn;
    bool operator>(const Pending& o) const { return ts != o.ts ? ts > o.ts : order > o.order; }
  };

  void start_connection(Micros at, const Conn* replay_of);
  void build_events(Conn& c);
  Packet emit(Conn& c);
  uint32_t pick_client();
  uint32_t pick_server();

  TraceSpec spec_;
  TraceStats stats_;
  std::mt19937_64 rng_;
  Micros end_ = 0;
  Micros next_arrival_ = 0;
  bool arrivals_done_ = false;
  uint64_t next_conn_ = 0;
  uint64_t order_ = 0;
  std::unordered_map<uint64_t, std::unique_ptr<Conn>> conns_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> heap_;
  // Replays scheduled for the future: (start, order, template)
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> replays_;
  std::unordered_map<uint64_t, std::unique_ptr<Conn>> templates_;
};

// Writes the trace as pcap and returns its statistics.
TraceStats generate_trace(const TraceSpec& spec, std::ostream& pcap);
std::vector<Packet> generate_packets(const TraceSpec& spec, TraceStats* stats = nullptr);

// RE payload rule: byte i = (i * r) mod 256.
Bytes re_payload(uint8_t r, size_t len);

struct CostModel {
  double fast_price = 0.740;   // $ per GB (1e9 bytes)
  double bulk_price = 0.0467;

  void validate() const;
};

double storage_cost(const TierUsage& usage, const CostModel& model);
double round_cents(double dollars);

// One trace pass per chunking config; every window is then evaluated by
// replaying (flow end time, chunk hash, sizes) through a chunk index.
struct SweepPoint {
  ChunkingConfig chunking;
  double window_seconds = 0;
  uint64_t chunks = 0;
  uint64_t duplicate_chunks = 0;
  uint64_t raw_bytes = 0;
  uint64_t duplicate_raw_bytes = 0;
  uint64_t compressed_bytes = 0;  // every chunk record, as if nothing were deduplicated
  uint64_t duplicate_compressed_bytes = 0;
  uint64_t peak_index_entries = 0;
  uint64_t fast_bytes = 0;        // header blocks + chunk refs + chunk index estimate
  uint64_t bulk_bytes = 0;        // stored chunk records
  double cost = 0;

  double redundancy_raw() const { return raw_bytes ? double(duplicate_raw_bytes) / raw_bytes : 0; }
  double redundancy_compressed() const {
    return compressed_bytes ? double(duplicate_compressed_bytes) / compressed_bytes : 0;
  }
};

struct SweepReport {
  std::vector<SweepPoint> points;
  std::string to_text() const;
  std::string to_csv() const;
};

struct SweepOptions {
  std::vector<ChunkingConfig> configs;
  std::vector<double> windows;  // seconds
  GrouperConfig grouper;
  CostModel cost;
  uint32_t link_type = kLinkEthernet;
  bool compress_chunks = true;
  uint32_t index_entry_bytes = 28;  // fast-tier estimate per chunk-index entry
};

// `source` is called once per config and must feed every packet of the
// trace to the callback.
using PacketSource = std::function<void(const std::function<void(Packet)>&)>;

SweepReport dedup_window_sweep(const PacketSource& source, const SweepOptions& options);
SweepReport dedup_window_sweep(const std::vector<Packet>& trace, const SweepOptions& options);
SweepReport dedup_window_sweep_file(const std::string& pcap_path, SweepOptions options);

}  // namespace flowvault
