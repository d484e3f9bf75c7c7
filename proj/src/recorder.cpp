#include "flowvault/recorder.hpp"

#include <fstream>
#include <iostream>

#include "flowvault/pcap.hpp"

namespace flowvault {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

}  // namespace

void PipelineConfig::validate() const {
  archive.validate();
  grouper().validate();
  if (queue_depth == 0) throw UsageError("queue depth must be at least 1");
}

ArchiveTotals RecordReport::totals() const {
  ArchiveTotals t;
  t.packets = packets;
  t.flows = flows;
  t.input_bytes = input_bytes;
  t.payload_bytes = payload_bytes;
  t.chunks = chunks;
  t.dedup_hits = dedup_hits;
  t.duplicate_bytes = duplicate_bytes;
  t.stored_chunk_bytes = stored_chunk_bytes;
  t.header_block_bytes = header_block_bytes;
  t.index_bytes = index_bytes;
  return t;
}

struct Recorder::Job {
  uint64_t seq = 0;
  uint64_t epoch = 0;
  Flow flow;
};

struct Recorder::Result {
  enum class Kind { kFlow, kClose } kind = Kind::kFlow;
  uint64_t seq = 0;
  uint64_t epoch = 0;
  FlowKey key;
  uint32_t packets = 0;
  Micros first_ts = 0;
  Micros last_ts = 0;
  uint64_t payload_bytes = 0;
  uint64_t raw_header_bytes = 0;
  CompressedHeaderBlock block;
  std::vector<PreparedChunk> chunks;
};

uint64_t Recorder::assign_epoch(Micros last_ts, Micros epoch_len, uint64_t lowest_open) {
  return std::max<uint64_t>(last_ts / epoch_len, lowest_open);
}

Recorder::Recorder(const PipelineConfig& config)
    : config_(config),
      grouper_((config.validate(), config.grouper())),
      epoch_len_(config.archive.epoch_micros()),
      idle_(seconds_to_micros(config.archive.idle_timeout)),
      chunk_index_(config.archive.dedup_window_micros()) {
  archive_ = Archive::create(config_.archive);
  unsigned n = config_.workers ? config_.workers : std::max(1u, std::thread::hardware_concurrency());
  config_.workers = n;
  max_in_flight_ = n * config_.queue_depth;
  t0_ = Clock::now();
  for (unsigned i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
  committer_ = std::thread([this] { committer_loop(); });
}

Recorder::~Recorder() {
  {
    std::lock_guard lk(qmu_);
    stop_ = true;
  }
  failed_ = true;
  qcv_.notify_all();
  space_cv_.notify_all();
  rcv_.notify_all();
  for (auto& t : workers_)
    if (t.joinable()) t.join();
  if (committer_.joinable()) committer_.join();
}

void Recorder::fail(std::exception_ptr e) {
  {
    std::lock_guard lk(emu_);
    if (!error_) error_ = e;
  }
  failed_ = true;
  qcv_.notify_all();
  space_cv_.notify_all();
  rcv_.notify_all();
}

void Recorder::rethrow_if_failed() {
  if (!failed_) return;
  std::lock_guard lk(emu_);
  if (error_) std::rethrow_exception(error_);
  throw Error("recorder stopped");
}

size_t Recorder::in_flight() const {
  std::lock_guard lk(qmu_);
  return in_flight_;
}

void Recorder::ingest(Packet packet) {
  if (finished_) throw UsageError("recorder already finished");
  rethrow_if_failed();
  const auto t = Clock::now();
  packet.validate();
  if (!started_) {
    started_ = true;
    lowest_open_ = packet.ts() / epoch_len_;
  }
  ParsedHeader h = parse_headers(packet, config_.archive.link_type);
  ++report_.packets;
  report_.payload_bytes += packet.data.size() - h.payload_offset;
  for (auto& f : grouper_.ingest(std::move(packet), std::move(h))) dispatch(std::move(f));
  maybe_close_epochs();
  report_.ingest_seconds += seconds_since(t);
}

void Recorder::dispatch(Flow flow) {
  auto job = std::make_unique<Job>();
  job->epoch = assign_epoch(flow.last_ts, epoch_len_, lowest_open_);
  if (flow.last_ts / epoch_len_ < lowest_open_) ++report_.late_flows;
  max_assigned_ = std::max(max_assigned_, job->epoch);
  job->flow = std::move(flow);
  ++report_.flows;
  std::unique_lock lk(qmu_);
  space_cv_.wait(lk, [&] { return in_flight_ < max_in_flight_ || failed_; });
  rethrow_if_failed();
  job->seq = next_seq_++;
  ++in_flight_;
  jobs_.push_back(std::move(job));
  lk.unlock();
  qcv_.notify_one();
}

void Recorder::emit_close(uint64_t epoch) {
  auto r = std::make_unique<Result>();
  r->kind = Result::Kind::kClose;
  r->epoch = epoch;
  {
    std::lock_guard lk(qmu_);
    r->seq = next_seq_++;
  }
  push_result(std::move(r));
}

void Recorder::maybe_close_epochs() {
  // Every flow emitted from now on ends at or after clock - idle.
  const Micros clock = grouper_.clock();
  if (clock < idle_) return;
  const uint64_t target = (clock - idle_) / epoch_len_;
  while (lowest_open_ < target) emit_close(lowest_open_++);
}

void Recorder::push_result(std::unique_ptr<Result> r) {
  {
    std::lock_guard lk(rmu_);
    uint64_t s = r->seq;
    ready_.emplace(s, std::move(r));
  }
  rcv_.notify_all();
}

void Recorder::worker_loop() {
  try {
    for (;;) {
      std::unique_ptr<Job> job;
      {
        std::unique_lock lk(qmu_);
        qcv_.wait(lk, [&] { return !jobs_.empty() || stop_ || failed_; });
        if (failed_ || (stop_ && jobs_.empty())) return;
        job = std::move(jobs_.front());
        jobs_.pop_front();
      }
      const auto t = Clock::now();
      auto r = std::make_unique<Result>();
      const Flow& f = job->flow;
      r->seq = job->seq;
      r->epoch = job->epoch;
      r->key = f.key;
      r->packets = static_cast<uint32_t>(f.packets.size());
      r->first_ts = f.first_ts;
      r->last_ts = f.last_ts;
      for (const auto& gp : f.packets) r->raw_header_bytes += 16 + gp.header.payload_offset;
      const bool dict = config_.archive.dictionary_compression;
      r->block = compress_headers(f, dict);
      PayloadStream ps = assemble_payload_stream(f);
      r->payload_bytes = ps.bytes.size();
      r->chunks = prepare_chunks(ps.bytes, chunk_stream(ps.bytes, config_.archive.chunking), dict);
      job.reset();
      compress_seconds_.fetch_add(seconds_since(t));
      push_result(std::move(r));
    }
  } catch (...) {
    fail(std::current_exception());
  }
}

void Recorder::committer_loop() {
  try {
    uint64_t next = 0;
    for (;;) {
      std::unique_ptr<Result> r;
      {
        std::unique_lock lk(rmu_);
        rcv_.wait(lk, [&] {
          return failed_ || next == end_seq_ || (!ready_.empty() && ready_.begin()->first == next);
        });
        if (failed_ || next == end_seq_) return;
        r = std::move(ready_.begin()->second);
        ready_.erase(ready_.begin());
      }
      ++next;
      const auto t = Clock::now();
      commit(*r);
      report_.commit_seconds += seconds_since(t);
      if (r->kind == Result::Kind::kFlow) {
        {
          std::lock_guard lk(qmu_);
          --in_flight_;
        }
        space_cv_.notify_all();
      }
    }
  } catch (...) {
    fail(std::current_exception());
  }
}

void Recorder::commit(Result& r) {
  Archive& a = *archive_;
  if (r.kind == Result::Kind::kClose) {
    auto it = pending_.find(r.epoch);
    if (it == pending_.end()) return;
    EpochInfo info = a.seal_epoch(r.epoch, it->second);
    pending_.erase(it);
    ++report_.epochs;
    report_.index_bytes += info.ip_index_bytes + info.port_index_bytes;
    return;
  }
  chunk_index_.expire(r.last_ts);
  a.set_writer_epoch(r.epoch);
  DedupStats st;
  std::vector<ChunkRef> refs = dedup_and_store(r.chunks, chunk_index_, a, r.last_ts, &st);
  for (const auto& ref : refs) a.note_reference(ref.location, r.epoch);
  report_.chunks += st.chunks;
  report_.dedup_hits += st.hits;
  report_.duplicate_bytes += st.duplicate_bytes;
  report_.stored_chunk_bytes += st.stored_bytes;
  report_.peak_index_entries = chunk_index_.peak_size();
  report_.raw_header_bytes += r.raw_header_bytes;

  const size_t without_refs = r.block.serialize().size();
  r.block.chunk_refs = std::move(refs);
  SealedFlow sf;
  sf.block = r.block.serialize();
  sf.key = r.key;
  sf.packets = r.packets;
  sf.first_ts = r.first_ts;
  sf.last_ts = r.last_ts;
  report_.header_only_bytes += without_refs + 8;
  report_.header_block_bytes += sf.block.size() + 8;
  pending_[r.epoch].push_back(std::move(sf));
}

RecordReport Recorder::finish() {
  if (finished_) throw UsageError("recorder already finished");
  rethrow_if_failed();
  const auto t = Clock::now();
  for (auto& f : grouper_.flush_all()) dispatch(std::move(f));
  report_.ingest_seconds += seconds_since(t);
  // Close every epoch a flow was assigned to.
  if (started_)
    while (lowest_open_ <= max_assigned_) emit_close(lowest_open_++);
  {
    std::lock_guard lk(rmu_);
    std::lock_guard lk2(qmu_);
    end_seq_ = next_seq_;
  }
  rcv_.notify_all();
  committer_.join();
  {
    std::lock_guard lk(qmu_);
    stop_ = true;
  }
  qcv_.notify_all();
  for (auto& w : workers_) w.join();
  rethrow_if_failed();
  if (!pending_.empty()) throw Error("internal: flows left in unsealed epochs");
  finished_ = true;
  report_.timestamp_regressions = grouper_.regressions();
  report_.compress_seconds = compress_seconds_.load();
  report_.input_bytes = input_bytes_;
  archive_->finish(report_.totals());
  report_.wall_seconds = seconds_since(t0_);
  return report_;
}

RecordReport record_stream(std::istream& in, const PipelineConfig& config) {
  PcapReader reader(in);
  PipelineConfig cfg = config;
  cfg.archive.link_type = reader.link_type();
  Recorder rec(cfg);
  rec.add_input_bytes(kPcapGlobalHeaderSize);
  while (auto p = reader.next()) {
    rec.add_input_bytes(kPcapRecordHeaderSize + p->data.size());
    rec.ingest(std::move(*p));
  }
  for (const auto& w : reader.warnings()) std::cerr << "warning: " << w << "\n";
  return rec.finish();
}

RecordReport record_file(const std::string& path, const PipelineConfig& config) {
  if (path == "-") return record_stream(std::cin, config);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open input " + path);
  return record_stream(in, config);
}

}  // namespace flowvault
