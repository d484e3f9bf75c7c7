#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flowvault/store.hpp"

namespace flowvault {

enum class Retrieval : uint8_t { kExistence, kHeaders, kFull };

struct TimeRange {
  enum class Kind : uint8_t { kEntire, kLast, kBetween } kind = Kind::kEntire;
  Micros last = 0;  // kLast
  Micros t0 = 0;    // kBetween, half-open [t0, t1)
  Micros t1 = 0;

  static TimeRange entire() { return {}; }
  static TimeRange last_seconds(double s);
  static TimeRange between(Micros t0, Micros t1);
  // "entire", "last:<sec>", "<t0>:<t1>" with seconds (decimals allowed).
  static TimeRange parse(const std::string& text);
  std::string str() const;
};

// Conjunction of exact-match predicates; unset fields match anything.
struct Criteria {
  std::optional<uint32_t> src_ip, dst_ip, any_ip;
  std::optional<uint16_t> src_port, dst_port, any_port;
  std::optional<uint8_t> protocol;

  bool matches(const FlowKey& k) const;
  bool has_indexed() const { return src_ip || dst_ip || any_ip || src_port || dst_port || any_port; }
  bool empty() const { return !has_indexed() && !protocol; }
  std::string str() const;
};

struct Query {
  TimeRange range;
  Criteria criteria;
  Retrieval retrieval = Retrieval::kFull;
};

struct QueryStats {
  uint64_t epochs_touched = 0;
  uint64_t candidates = 0;
  uint64_t false_positives = 0;
  uint64_t blocks_read = 0;
  uint64_t blocks_decompressed = 0;
  uint64_t full_scans = 0;
  uint64_t chunks_read = 0;
  uint64_t units = 0;
  double seconds = 0;
};

struct FlowError {
  FlowLocation location;
  std::string message;
};

struct QueryResult {
  bool exists = false;
  uint64_t flow_count = 0;
  uint64_t packet_count = 0;
  std::vector<FlowLocation> locations;  // verified matches, ascending
  std::vector<FlowError> errors;        // flows that could not be rebuilt
  Bytes pcap;                           // empty for existence queries
  QueryStats stats;
};

// Epoch ids the range selects out of a snapshot (epoch k covers
// [k*E, (k+1)*E)). LAST counts back from the end of the newest epoch.
std::vector<uint64_t> select_epochs(const std::vector<EpochInfo>& snapshot, Micros epoch_len,
                                    const TimeRange& range);

// A query split into bounded work units (one epoch lookup, or up to
// kFlowsPerUnit candidate flows). The whole state is a value: copying a
// task checkpoints it, and a copy resumes exactly where the original was.
class QueryTask {
 public:
  static constexpr size_t kFlowsPerUnit = 256;

  // Snapshots the archive's sealed epochs now; later epochs are not seen.
  QueryTask(const Archive& archive, Query query);
  // Runs against an explicit snapshot (a prefix of the archive's epochs).
  QueryTask(const Archive& archive, Query query, const std::vector<EpochInfo>& snapshot);

  // Runs one unit. Returns true once the query is complete.
  bool step();
  bool done() const { return phase_ == Phase::kDone; }
  // Sorts and emits the packets; valid once done(). If `out` is given, the
  // pcap goes there instead of into QueryResult::pcap.
  QueryResult finish(std::ostream* out = nullptr);

  const QueryStats& stats() const { return stats_; }
  const Query& query() const { return query_; }
  const std::vector<uint64_t>& epochs() const { return epochs_; }
  const std::vector<EpochInfo>& snapshot() const { return snapshot_; }

 private:
  enum class Phase : uint8_t { kLookup, kVerify, kDone };

  struct Rec {
    Micros ts;
    uint32_t tie_rank;
    uint32_t original_len;
    Bytes data;
  };

  void lookup_epoch(uint64_t epoch_id);
  void verify_batch();
  void take_flow(FlowLocation loc, const Bytes& block);

  const Archive* archive_;
  Query query_;
  std::vector<EpochInfo> snapshot_;
  std::vector<uint64_t> epochs_;
  size_t epoch_cursor_ = 0;
  std::vector<uint64_t> candidates_;
  std::vector<uint8_t> prechecked_;  // 1 if a full scan already verified the key
  size_t cand_cursor_ = 0;
  Phase phase_ = Phase::kLookup;

  std::vector<FlowLocation> matches_;
  std::vector<FlowError> errors_;
  std::vector<Rec> packets_;
  QueryStats stats_;
};

class QueryEngine {
 public:
  explicit QueryEngine(const Archive& archive) : archive_(archive) {}
  QueryResult execute(const Query& q, std::ostream* out = nullptr) const;

 private:
  const Archive& archive_;
};

}  // namespace flowvault
