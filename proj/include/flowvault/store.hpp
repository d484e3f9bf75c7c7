#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "flowvault/chunking.hpp"
#include "flowvault/flow_index.hpp"
#include "flowvault/header_codec.hpp"
#include "flowvault/payload_codec.hpp"

namespace flowvault {

inline constexpr uint32_t kArchiveFormatVersion = 1;

// Settings fixed when an archive is created and recorded in its manifest.
struct ArchiveConfig {
  std::string fast_dir;
  std::string bulk_dir;
  double epoch_seconds = 60.0;
  ChunkingConfig chunking = ChunkingConfig::cdc(4096);
  double dedup_window_seconds = 3600.0;
  uint32_t link_type = kLinkEthernet;
  bool dictionary_compression = true;
  uint64_t segment_max_bytes = uint64_t{1} << 30;
  double mfd = 300.0;
  double idle_timeout = 15.0;

  Micros epoch_micros() const { return seconds_to_micros(epoch_seconds); }
  Micros dedup_window_micros() const { return seconds_to_micros(dedup_window_seconds); }
  void validate() const;
};

struct EpochInfo {
  uint64_t id = 0;
  uint64_t base = 0;        // global offset of the first header frame
  uint64_t log_bytes = 0;   // frames only, excluding the file header
  uint64_t flows = 0;
  uint64_t packets = 0;
  Micros first_ts = 0;      // earliest packet of any flow in the epoch
  Micros last_ts = 0;
  uint64_t ip_index_bytes = 0;
  uint64_t port_index_bytes = 0;

  uint64_t end_offset() const { return base + log_bytes; }
};

struct SegmentInfo {
  uint32_t id = 0;
  uint64_t length = 0;     // committed file length, header included
  int64_t horizon = -1;    // newest epoch referencing any chunk in it
  int64_t writer_max = -1; // newest epoch that wrote a chunk into it
  bool sealed = false;
};

enum class EvictionPolicy : uint8_t {
  kHorizon,    // drop a segment only when no retained epoch references it
  kEpochOnly,  // drop segments by writer epoch alone; dedup references may dangle
};

// Sums carried in the manifest so `stats` reproduces the record report.
struct ArchiveTotals {
  uint64_t packets = 0;
  uint64_t flows = 0;
  uint64_t input_bytes = 0;        // pcap bytes read
  uint64_t payload_bytes = 0;
  uint64_t chunks = 0;
  uint64_t dedup_hits = 0;
  uint64_t duplicate_bytes = 0;
  uint64_t stored_chunk_bytes = 0;
  uint64_t header_block_bytes = 0;
  uint64_t index_bytes = 0;
  uint64_t epochs_evicted = 0;
  uint64_t segments_evicted = 0;
};

struct TierUsage {
  uint64_t fast_bytes = 0;  // header logs + indexes + manifest
  uint64_t bulk_bytes = 0;  // chunk segments
};

// Flow metadata passed to seal_epoch alongside each serialized block.
struct SealedFlow {
  Bytes block;
  FlowKey key;
  uint32_t packets = 0;
  Micros first_ts = 0;
  Micros last_ts = 0;
};

// Test hook: after `ops` further write-side I/O operations the process
// exits via _Exit(code). If `torn`, the final write is cut in half first.
void set_crash_after_io_ops(uint64_t ops, bool torn, int code = 77);
void clear_crash_injection();
uint64_t io_ops_performed();

// Two-tier archive: header logs and epoch indexes on the fast tier, chunk
// segments on the bulk tier, a JSON manifest as the root of trust.
class Archive : public ChunkStore {
 public:
  // Creates a fresh archive; the tier directories must be empty or absent.
  static std::unique_ptr<Archive> create(const ArchiveConfig& config);
  // Opens the state recorded in the manifest; files or bytes the manifest
  // does not cover (an interrupted epoch) are ignored.
  static std::unique_ptr<Archive> open(const std::string& fast_dir,
                                       std::optional<std::string> bulk_dir = std::nullopt);

  ~Archive() override;
  Archive(const Archive&) = delete;
  Archive& operator=(const Archive&) = delete;

  const ArchiveConfig& config() const { return config_; }

  // ChunkStore
  ChunkLocation append_chunk(ByteView record) override;
  Bytes read_chunk(ChunkLocation loc) const override;

  // Epoch of the flow whose chunks are being appended; updates the open
  // segment's writer mark and horizon.
  void set_writer_epoch(uint64_t epoch_id) { writer_epoch_ = static_cast<int64_t>(epoch_id); }
  void note_reference(ChunkLocation loc, uint64_t epoch_id);

  // Writes the epoch's header log and indexes, makes them and the current
  // chunk segment durable, rotates the segment and publishes the manifest.
  EpochInfo seal_epoch(uint64_t epoch_id, const std::vector<SealedFlow>& flows);
  // Publishes totals and seals the open segment; used at end of recording.
  void finish(const ArchiveTotals& totals);

  // Snapshot of sealed epochs, ascending by id.
  std::vector<EpochInfo> epochs() const;
  std::optional<EpochInfo> epoch(uint64_t id) const;
  std::vector<SegmentInfo> segments() const;
  ArchiveTotals totals() const;
  TierUsage usage() const;

  Bytes read_header_block(FlowLocation loc) const;
  // Visits every frame of a sealed epoch's log in order.
  void scan_epoch(uint64_t epoch_id,
                  const std::function<void(FlowLocation, ByteView)>& visit) const;
  std::shared_ptr<const EpochIndex> index(uint64_t epoch_id, IndexField field) const;

  struct EvictionReport {
    uint64_t epochs_removed = 0;
    uint64_t segments_removed = 0;
    uint64_t fast_bytes_freed = 0;
    uint64_t bulk_bytes_freed = 0;
  };
  // Removes every epoch with id < retain_until and the segments the policy
  // allows. Takes the epoch lock exclusively.
  EvictionReport evict_oldest(uint64_t retain_until,
                              EvictionPolicy policy = EvictionPolicy::kHorizon);

  // Queries hold this shared while reading epochs.
  std::shared_lock<std::shared_mutex> read_lock() const {
    return std::shared_lock<std::shared_mutex>(epoch_lock_);
  }

  std::string header_log_path(uint64_t epoch_id) const;
  std::string index_path(uint64_t epoch_id, IndexField field) const;
  std::string segment_path(uint32_t segment_id) const;
  std::string manifest_path() const;

 private:
  struct File;

  Archive() = default;
  void load_manifest();
  void write_manifest();
  void open_segment(uint32_t id);
  File& segment_file(uint32_t id) const;
  File& log_file(uint64_t epoch_id) const;
  const EpochInfo* epoch_for_offset(uint64_t offset) const;

  ArchiveConfig config_;
  bool writable_ = false;

  mutable std::shared_mutex epoch_lock_;
  mutable std::mutex mu_;
  std::map<uint64_t, EpochInfo> epochs_;
  std::map<uint32_t, SegmentInfo> segments_;
  ArchiveTotals totals_;
  uint64_t next_log_offset_ = 0;
  uint32_t next_segment_id_ = 0;
  uint32_t current_segment_ = 0;
  bool have_segment_ = false;
  int64_t writer_epoch_ = -1;
  std::unique_ptr<File> writer_;

  mutable std::map<uint32_t, std::shared_ptr<File>> segment_files_;
  mutable std::map<uint64_t, std::shared_ptr<File>> log_files_;
  mutable std::map<std::pair<uint64_t, int>, std::shared_ptr<const EpochIndex>> index_cache_;
};

inline constexpr size_t kFileHeaderSize = 16;

}  // namespace flowvault
