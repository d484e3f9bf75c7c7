#include "flowvault/flow_grouper.hpp"

#include <algorithm>
#include <iostream>

namespace flowvault {

void GrouperConfig::validate() const {
  if (!(idle_timeout > 0) || !(idle_timeout <= mfd))
    throw UsageError("grouper: require 0 < idle_timeout <= mfd");
  if (max_buffered_bytes == 0) throw UsageError("grouper: max_buffered_bytes must be positive");
}

uint32_t TieRanker::rank(Micros ts) {
  if (counts_.empty() || ts > counts_.back().first) {
    counts_.emplace_back(ts, 1);
    Micros floor = ts > horizon_ ? ts - horizon_ : 0;
    while (!counts_.empty() && counts_.front().first < floor) counts_.pop_front();
    return 0;
  }
  if (ts == counts_.back().first) return counts_.back().second++;
  auto it = std::lower_bound(counts_.begin(), counts_.end(), ts,
                             [](const auto& e, Micros t) { return e.first < t; });
  if (it != counts_.end() && it->first == ts) return it->second++;
  counts_.insert(it, {ts, 1});
  return 0;
}

FlowGrouper::FlowGrouper(GrouperConfig config)
    : config_(config),
      mfd_(seconds_to_micros(config.mfd)),
      idle_(seconds_to_micros(config.idle_timeout)) {
  config_.validate();
}

void FlowGrouper::flush(uint64_t id, std::vector<Flow>& out) {
  auto it = buffers_.find(id);
  Buffer& b = it->second;
  by_key_.erase(b.flow.key);
  lru_.erase(b.lru_pos);
  by_first_.erase({b.flow.first_ts, id});
  buffered_bytes_ -= b.bytes;
  out.push_back(std::move(b.flow));
  buffers_.erase(it);
}

std::vector<Flow> FlowGrouper::ingest(Packet packet, ParsedHeader header) {
  std::vector<Flow> done;
  const Micros ts = packet.ts();
  if (seen_any_ && ts + kMicrosPerSecond < clock_) {
    ++regressions_;
    if (regressions_ <= 10)
      std::cerr << "warning: timestamp regression of " << (clock_ - ts)
                << " us; keeping ingest order\n";
  }
  clock_ = seen_any_ ? std::max(clock_, ts) : ts;
  seen_any_ = true;

  // Idle buffers, measured against the newest timestamp.
  while (!lru_.empty()) {
    Buffer& b = buffers_.at(lru_.front());
    if (clock_ - std::min(b.flow.last_ts, clock_) <= idle_) break;
    flush(lru_.front(), done);
  }

  const FlowKey key = extract_flow_key(header);
  if (auto it = by_key_.find(key); it != by_key_.end()) {
    const Flow& f = buffers_.at(it->second).flow;
    if (ts > f.first_ts && ts - f.first_ts > mfd_) flush(it->second, done);
  }

  const uint64_t size = packet.data.size();
  while (!by_first_.empty() && buffered_bytes_ + size > config_.max_buffered_bytes)
    flush(by_first_.begin()->second, done);

  uint64_t id;
  if (auto it = by_key_.find(key); it != by_key_.end()) {
    id = it->second;
    lru_.splice(lru_.end(), lru_, buffers_.at(id).lru_pos);
  } else {
    id = next_id_++;
    Buffer b;
    b.flow.key = key;
    b.flow.first_ts = ts;
    b.flow.last_ts = ts;
    lru_.push_back(id);
    b.lru_pos = std::prev(lru_.end());
    by_first_.insert({ts, id});
    by_key_.emplace(key, id);
    buffers_.emplace(id, std::move(b));
  }

  Buffer& b = buffers_.at(id);
  GroupedPacket gp;
  gp.ingest_seq = next_seq_++;
  gp.tie_rank = ranker_.rank(ts);
  gp.packet = std::move(packet);
  gp.header = std::move(header);
  const bool is_tcp = gp.header.parse_class == ParseClass::kTcp;
  const uint8_t flags = gp.header.tcp.flags;
  const bool empty_payload = gp.payload_len() == 0;
  b.flow.last_ts = std::max(b.flow.last_ts, ts);
  b.flow.packets.push_back(std::move(gp));
  b.bytes += size;
  buffered_bytes_ += size;

  bool terminate = false;
  if (is_tcp) {
    constexpr uint8_t kControl = tcp_flag::kSyn | tcp_flag::kFin | tcp_flag::kRst;
    if (flags & tcp_flag::kRst) {
      terminate = true;
    } else if (b.fin_seen && (flags & tcp_flag::kAck) && !(flags & kControl) && empty_payload) {
      terminate = true;
    } else if (flags & tcp_flag::kFin) {
      b.fin_seen = true;
    }
  }
  if (terminate || buffered_bytes_ > config_.max_buffered_bytes) flush(id, done);
  return done;
}

std::vector<Flow> FlowGrouper::flush_all() {
  std::vector<Flow> out;
  while (!by_first_.empty()) flush(by_first_.begin()->second, out);
  return out;
}

}  // namespace flowvault
