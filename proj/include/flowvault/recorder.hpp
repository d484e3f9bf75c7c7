#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "flowvault/flow_grouper.hpp"
#include "flowvault/store.hpp"

namespace flowvault {

struct PipelineConfig {
  ArchiveConfig archive;
  uint64_t max_buffered_bytes = uint64_t{1} << 30;
  unsigned workers = 0;       // 0: hardware concurrency
  size_t queue_depth = 64;    // per worker; bounds flows in flight

  GrouperConfig grouper() const { return {archive.mfd, archive.idle_timeout, max_buffered_bytes}; }
  void validate() const;
};

struct RecordReport {
  uint64_t packets = 0;
  uint64_t flows = 0;
  uint64_t epochs = 0;
  uint64_t input_bytes = 0;         // pcap file bytes
  uint64_t payload_bytes = 0;
  uint64_t raw_header_bytes = 0;    // per-record 16 B metadata + header bytes
  uint64_t header_block_bytes = 0;  // framed blocks as stored, chunk refs included
  uint64_t header_only_bytes = 0;   // framed blocks without chunk refs
  uint64_t index_bytes = 0;
  uint64_t chunks = 0;
  uint64_t dedup_hits = 0;
  uint64_t duplicate_bytes = 0;
  uint64_t stored_chunk_bytes = 0;
  uint64_t peak_index_entries = 0;
  uint64_t timestamp_regressions = 0;
  uint64_t late_flows = 0;          // flows whose end epoch had already closed
  double ingest_seconds = 0;        // main thread: parse + group + dispatch
  double compress_seconds = 0;      // summed over workers
  double commit_seconds = 0;
  double wall_seconds = 0;

  double packets_per_second() const { return wall_seconds > 0 ? packets / wall_seconds : 0; }
  double gbps() const { return wall_seconds > 0 ? input_bytes * 8.0 / wall_seconds / 1e9 : 0; }
  ArchiveTotals totals() const;
};

// Records a packet stream into a new archive. ingest() is called from one
// thread; header and payload compression run on worker threads and a
// single committer applies dedup and storage in dispatch order.
class Recorder {
 public:
  explicit Recorder(const PipelineConfig& config);
  ~Recorder();
  Recorder(const Recorder&) = delete;
  Recorder& operator=(const Recorder&) = delete;

  void ingest(Packet packet);
  // Drains the grouper, seals every open epoch and publishes the manifest.
  RecordReport finish();

  Archive& archive() { return *archive_; }
  const PipelineConfig& config() const { return config_; }
  // Flows dispatched but not yet committed.
  size_t in_flight() const;
  void add_input_bytes(uint64_t n) { input_bytes_ += n; }

  // Epoch index for a flow ending at `last_ts`, given epochs below
  // `lowest_open` are closed.
  static uint64_t assign_epoch(Micros last_ts, Micros epoch_len, uint64_t lowest_open);

 private:
  struct Job;
  struct Result;

  void dispatch(Flow flow);
  void emit_close(uint64_t epoch);
  void maybe_close_epochs();
  void push_result(std::unique_ptr<Result> r);
  void worker_loop();
  void committer_loop();
  void commit(Result& r);
  void rethrow_if_failed();
  void fail(std::exception_ptr e);

  PipelineConfig config_;
  std::unique_ptr<Archive> archive_;
  FlowGrouper grouper_;
  Micros epoch_len_;
  Micros idle_;
  bool started_ = false;
  bool finished_ = false;
  uint64_t lowest_open_ = 0;
  uint64_t max_assigned_ = 0;
  uint64_t next_seq_ = 0;
  uint64_t input_bytes_ = 0;
  RecordReport report_;
  std::chrono::steady_clock::time_point t0_;

  // worker queue
  mutable std::mutex qmu_;
  std::condition_variable qcv_;
  std::condition_variable space_cv_;
  std::deque<std::unique_ptr<Job>> jobs_;
  bool stop_ = false;
  size_t in_flight_ = 0;
  size_t max_in_flight_;

  // reorder buffer
  std::mutex rmu_;
  std::condition_variable rcv_;
  std::map<uint64_t, std::unique_ptr<Result>> ready_;
  uint64_t end_seq_ = UINT64_MAX;

  // committer state
  MemoryChunkIndex chunk_index_;
  std::map<uint64_t, std::vector<SealedFlow>> pending_;
  std::atomic<double> compress_seconds_{0};

  std::mutex emu_;
  std::exception_ptr error_;
  std::atomic<bool> failed_{false};

  std::vector<std::thread> workers_;
  std::thread committer_;
};

RecordReport record_stream(std::istream& pcap, const PipelineConfig& config);
RecordReport record_file(const std::string& path, const PipelineConfig& config);

}  // namespace flowvault
