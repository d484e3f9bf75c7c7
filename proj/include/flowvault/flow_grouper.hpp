#pragma once

#include <cstdint>
#include <deque>
#include <list>
#include <map>
#include <set>
#include <unordered_map>
#include <vector>

#include "flowvault/packet.hpp"

namespace flowvault {

inline constexpr Micros kMicrosPerSecond = 1'000'000;

inline Micros seconds_to_micros(double s) {
  return static_cast<Micros>(s * 1e6 + 0.5);
}

struct GroupedPacket {
  Packet packet;
  ParsedHeader header;
  uint64_t ingest_seq = 0;
  // Number of earlier-ingested packets carrying the identical timestamp.
  // Ordering by (ts, tie_rank) equals ordering by (ts, ingest_seq).
  uint32_t tie_rank = 0;

  size_t payload_len() const { return packet.data.size() - header.payload_offset; }
};

struct Flow {
  FlowKey key;
  std::vector<GroupedPacket> packets;
  Micros first_ts = 0;
  Micros last_ts = 0;
};

struct GrouperConfig {
  double mfd = 300.0;           // seconds
  double idle_timeout = 15.0;   // seconds
  uint64_t max_buffered_bytes = uint64_t{1} << 30;

  void validate() const;
};

// Assigns tie ranks to an ingest stream. Keeps per-timestamp counters for a
// bounded horizon behind the newest timestamp seen.
class TieRanker {
 public:
  explicit TieRanker(Micros horizon = 2 * kMicrosPerSecond) : horizon_(horizon) {}
  uint32_t rank(Micros ts);

 private:
  Micros horizon_;
  std::deque<std::pair<Micros, uint32_t>> counts_;  // ascending by ts
};

class FlowGrouper {
 public:
  explicit FlowGrouper(GrouperConfig config);

  // Adds one packet; returns every flow this event completed.
  std::vector<Flow> ingest(Packet packet, ParsedHeader header);
  // Drains every buffer, ordered by first packet timestamp.
  std::vector<Flow> flush_all();

  uint64_t buffered_bytes() const { return buffered_bytes_; }
  size_t open_flows() const { return buffers_.size(); }
  uint64_t regressions() const { return regressions_; }
  // Newest timestamp seen so far (monotone).
  Micros clock() const { return clock_; }
  const GrouperConfig& config() const { return config_; }

 private:
  struct Buffer {
    Flow flow;
    uint64_t bytes = 0;
    bool fin_seen = false;
    std::list<uint64_t>::iterator lru_pos;
  };

  void flush(uint64_t id, std::vector<Flow>& out);

  GrouperConfig config_;
  Micros mfd_;
  Micros idle_;
  uint64_t next_id_ = 0;
  uint64_t next_seq_ = 0;
  uint64_t buffered_bytes_ = 0;
  uint64_t regressions_ = 0;
  Micros clock_ = 0;
  bool seen_any_ = false;
  TieRanker ranker_;
  std::unordered_map<FlowKey, uint64_t, FlowKeyHash> by_key_;
  std::map<uint64_t, Buffer> buffers_;
  std::list<uint64_t> lru_;                       // least recently active first
  std::set<std::pair<Micros, uint64_t>> by_first_;  // (first_ts, id)
};

}  // namespace flowvault
