#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "flowvault/query.hpp"
#include "flowvault/recorder.hpp"

namespace flowvault {

struct OnlineConfig {
  double rate_pps = 0;          // capture pacing in wall time; 0 = unpaced
  size_t ring_capacity = 1 << 16;
  size_t low_water = 64;        // query units run only while the ring holds fewer packets
};

struct OnlineQuery {
  Query query;
  uint64_t after_packets = 0;   // issued once this many packets were ingested
};

struct OnlineQueryOutcome {
  QueryResult result;
  std::vector<EpochInfo> snapshot;  // sealed epochs when the query started
  uint64_t issued_at_packet = 0;
  uint64_t finished_at_packet = 0;  // packets ingested when its last unit ran
  uint64_t units = 0;
};

struct OnlineReport {
  RecordReport record;
  uint64_t offered = 0;
  uint64_t dropped = 0;
  uint64_t max_ring_fill = 0;
  uint64_t query_units = 0;
  std::vector<OnlineQueryOutcome> queries;
};

// Called between query units with the task about to run its next unit.
// Tests use it to swap in a checkpoint copy of the task.
using UnitHook = std::function<void(QueryTask&)>;

// Records a packet stream while answering queries. A capture thread feeds a
// bounded ring at the configured rate and counts packets it cannot place;
// the ingest thread drains the ring and, whenever the ring is nearly
// empty, advances the active query by one work unit.
OnlineReport run_online(const PipelineConfig& config, const OnlineConfig& online,
                        const std::function<std::optional<Packet>()>& source,
                        std::vector<OnlineQuery> queries, const UnitHook& hook = {});

}  // namespace flowvault
