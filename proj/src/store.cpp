#include "flowvault/store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

namespace flowvault {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr uint32_t kLogMagic = 0x4C485646;      // "FVHL"
constexpr uint32_t kSegmentMagic = 0x47535646;  // "FVSG"
constexpr uint32_t kFileVersion = 1;
constexpr size_t kFrameOverhead = 8;            // u32 length + u32 crc

// All write-side I/O funnels through here so the crash hook can count it.
struct CrashPlan {
  std::atomic<uint64_t> ops{0};
  std::atomic<uint64_t> crash_at{0};
  bool torn = false;
  int code = 77;
};
CrashPlan g_crash;

// Returns true when this op is the one to die on.
bool tick() {
  const uint64_t n = ++g_crash.ops;
  const uint64_t at = g_crash.crash_at.load();
  return at != 0 && n >= at;
}

[[noreturn]] void die() { _Exit(g_crash.code); }

std::string errno_text(const std::string& what, const std::string& path) {
  return what + " " + path + ": " + std::strerror(errno);
}

void write_all(int fd, ByteView b, uint64_t offset, const std::string& path) {
  if (tick()) {
    if (g_crash.torn && b.size() > 1) {
      [[maybe_unused]] auto r = ::pwrite(fd, b.data(), b.size() / 2, static_cast<off_t>(offset));
    }
    die();
  }
  size_t done = 0;
  while (done < b.size()) {
    ssize_t n = ::pwrite(fd, b.data() + done, b.size() - done, static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == ENOSPC)
        throw StorageError("storage full writing " + path + "; evict old epochs and retry");
      throw StorageError(errno_text("write failed on", path));
    }
    done += static_cast<size_t>(n);
  }
}

void sync_fd(int fd, const std::string& path) {
  if (tick()) die();
  if (::fsync(fd) != 0) throw StorageError(errno_text("fsync failed on", path));
}

void sync_dir(const std::string& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  sync_fd(fd, dir);
  ::close(fd);
}

void rename_file(const std::string& from, const std::string& to) {
  if (tick()) die();
  if (::rename(from.c_str(), to.c_str()) != 0) throw StorageError(errno_text("rename failed for", to));
}

uint64_t remove_file(const std::string& path) {
  std::error_code ec;
  uint64_t size = fs::exists(path, ec) ? fs::file_size(path, ec) : 0;
  if (tick()) die();
  fs::remove(path, ec);
  return ec ? 0 : size;
}

Bytes file_header(uint32_t magic, uint64_t id) {
  ByteWriter w;
  w.u32le(magic);
  w.u32le(kFileVersion);
  w.u64le(id);
  return w.take();
}

// Writes a whole file and makes it durable.
void write_file(const std::string& path, ByteView bytes) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw StorageError(errno_text("cannot create", path));
  try {
    write_all(fd, bytes, 0, path);
    sync_fd(fd, path);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataUnavailable("cannot read " + path);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void set_crash_after_io_ops(uint64_t ops, bool torn, int code) {
  g_crash.torn = torn;
  g_crash.code = code;
  g_crash.crash_at = g_crash.ops.load() + ops;
}

void clear_crash_injection() { g_crash.crash_at = 0; }

uint64_t io_ops_performed() { return g_crash.ops.load(); }

struct Archive::File {
  int fd = -1;
  std::string path;

  File(const std::string& p, int flags) : path(p) {
    fd = ::open(p.c_str(), flags | O_CLOEXEC, 0644);
    if (fd < 0) {
      if (errno == ENOENT) throw DataUnavailable("missing file " + p);
      throw StorageError(errno_text("cannot open", p));
    }
  }
  ~File() {
    if (fd >= 0) ::close(fd);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  // Reads exactly n bytes or throws.
  Bytes pread_exact(uint64_t offset, size_t n) const {
    Bytes out(n);
    size_t done = 0;
    while (done < n) {
      ssize_t r = ::pread(fd, out.data() + done, n - done, static_cast<off_t>(offset + done));
      if (r < 0 && errno == EINTR) continue;
      if (r < 0) throw StorageError(errno_text("read failed on", path));
      if (r == 0) throw DataUnavailable("read past end of " + path);
      done += static_cast<size_t>(r);
    }
    return out;
  }
  // Reads up to n bytes.
  Bytes pread_some(uint64_t offset, size_t n) const {
    Bytes out(n);
    ssize_t r;
    do {
      r = ::pread(fd, out.data(), n, static_cast<off_t>(offset));
    } while (r < 0 && errno == EINTR);
    if (r < 0) throw StorageError(errno_text("read failed on", path));
    out.resize(static_cast<size_t>(r));
    return out;
  }
};

void ArchiveConfig::validate() const {
  if (fast_dir.empty() || bulk_dir.empty()) throw UsageError("archive needs fast and bulk directories");
  if (!(epoch_seconds > 0)) throw UsageError("epoch length must be positive");
  if (dedup_window_seconds < 0) throw UsageError("dedup window must be non-negative");
  if (segment_max_bytes < 4096) throw UsageError("segment size limit too small");
  chunking.validate();
}

std::string Archive::header_log_path(uint64_t id) const {
  return config_.fast_dir + "/headers/epoch_" + std::to_string(id) + ".log";
}
std::string Archive::index_path(uint64_t id, IndexField f) const {
  return config_.fast_dir + "/index/epoch_" + std::to_string(id) + "." + field_name(f) + ".idx";
}
std::string Archive::segment_path(uint32_t id) const {
  return config_.bulk_dir + "/chunks/seg_" + std::to_string(id) + ".dat";
}
std::string Archive::manifest_path() const { return config_.fast_dir + "/manifest"; }

std::unique_ptr<Archive> Archive::create(const ArchiveConfig& config) {
  config.validate();
  if (fs::exists(config.fast_dir + "/manifest"))
    throw UsageError("an archive already exists in " + config.fast_dir);
  if (fs::exists(config.bulk_dir + "/chunks") && !fs::is_empty(config.bulk_dir + "/chunks"))
    throw UsageError("bulk directory " + config.bulk_dir + " already holds chunk segments");
  fs::create_directories(config.fast_dir + "/headers");
  fs::create_directories(config.fast_dir + "/index");
  fs::create_directories(config.bulk_dir + "/chunks");

  std::unique_ptr<Archive> a(new Archive());
  a->config_ = config;
  a->writable_ = true;
  a->write_manifest();
  return a;
}

std::unique_ptr<Archive> Archive::open(const std::string& fast_dir,
                                       std::optional<std::string> bulk_dir) {
  std::unique_ptr<Archive> a(new Archive());
  a->config_.fast_dir = fast_dir;
  a->load_manifest();
  if (bulk_dir) a->config_.bulk_dir = *bulk_dir;
  return a;
}

Archive::~Archive() = default;

void Archive::write_manifest() {
  json j;
  j["format_version"] = kArchiveFormatVersion;
  j["compressor"] = config_.dictionary_compression ? "deflate" : "stored";
  j["index_hash"] = "fnv1a64";
  j["chunk_hash"] = "sha1";
  j["epoch_seconds"] = config_.epoch_seconds;
  j["chunking"] = config_.chunking.str();
  j["dedup_window_seconds"] = config_.dedup_window_seconds;
  j["link_type"] = config_.link_type;
  j["segment_max_bytes"] = config_.segment_max_bytes;
  j["mfd"] = config_.mfd;
  j["idle_timeout"] = config_.idle_timeout;
  j["bulk_dir"] = config_.bulk_dir;
  j["next_log_offset"] = next_log_offset_;
  j["next_segment_id"] = next_segment_id_;
  json eps = json::array();
  for (const auto& [id, e] : epochs_) {
    eps.push_back({{"id", e.id},
                   {"base", e.base},
                   {"log_bytes", e.log_bytes},
                   {"flows", e.flows},
                   {"packets", e.packets},
                   {"first_ts", e.first_ts},
                   {"last_ts", e.last_ts},
                   {"ip_index_bytes", e.ip_index_bytes},
                   {"port_index_bytes", e.port_index_bytes}});
  }
  j["epochs"] = eps;
  json segs = json::array();
  for (const auto& [id, s] : segments_) {
    if (!s.sealed) continue;
    segs.push_back({{"id", s.id}, {"length", s.length}, {"horizon", s.horizon},
                    {"writer_max", s.writer_max}});
  }
  j["segments"] = segs;
  const auto& t = totals_;
  j["totals"] = {{"packets", t.packets},
                 {"flows", t.flows},
                 {"input_bytes", t.input_bytes},
                 {"payload_bytes", t.payload_bytes},
                 {"chunks", t.chunks},
                 {"dedup_hits", t.dedup_hits},
                 {"duplicate_bytes", t.duplicate_bytes},
                 {"stored_chunk_bytes", t.stored_chunk_bytes},
                 {"header_block_bytes", t.header_block_bytes},
                 {"index_bytes", t.index_bytes},
                 {"epochs_evicted", t.epochs_evicted},
                 {"segments_evicted", t.segments_evicted}};
  std::string text = j.dump(1);
  const std::string tmp = manifest_path() + ".tmp";
  write_file(tmp, ByteView(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
  rename_file(tmp, manifest_path());
  sync_dir(config_.fast_dir);
}

void Archive::load_manifest() {
  Bytes raw;
  try {
    raw = read_file(manifest_path());
  } catch (const DataUnavailable&) {
    throw UsageError("no archive at " + config_.fast_dir + " (manifest missing)");
  }
  json j;
  try {
    j = json::parse(raw.begin(), raw.end());
    if (j.at("format_version").get<uint32_t>() != kArchiveFormatVersion)
      throw IntegrityError("manifest: unsupported format version");
    if (j.at("index_hash").get<std::string>() != "fnv1a64")
      throw IntegrityError("manifest: unknown index hash");
    config_.dictionary_compression = j.at("compressor").get<std::string>() == "deflate";
    config_.epoch_seconds = j.at("epoch_seconds").get<double>();
    config_.chunking = ChunkingConfig::parse(j.at("chunking").get<std::string>());
    config_.dedup_window_seconds = j.at("dedup_window_seconds").get<double>();
    config_.link_type = j.at("link_type").get<uint32_t>();
    config_.segment_max_bytes = j.at("segment_max_bytes").get<uint64_t>();
    config_.mfd = j.at("mfd").get<double>();
    config_.idle_timeout = j.at("idle_timeout").get<double>();
    config_.bulk_dir = j.at("bulk_dir").get<std::string>();
    next_log_offset_ = j.at("next_log_offset").get<uint64_t>();
    next_segment_id_ = j.at("next_segment_id").get<uint32_t>();
    for (const auto& e : j.at("epochs")) {
      EpochInfo info;
      info.id = e.at("id");
      info.base = e.at("base");
      info.log_bytes = e.at("log_bytes");
      info.flows = e.at("flows");
      info.packets = e.at("packets");
      info.first_ts = e.at("first_ts");
      info.last_ts = e.at("last_ts");
      info.ip_index_bytes = e.at("ip_index_bytes");
      info.port_index_bytes = e.at("port_index_bytes");
      epochs_[info.id] = info;
    }
    for (const auto& s : j.at("segments")) {
      SegmentInfo info;
      info.id = s.at("id");
      info.length = s.at("length");
      info.horizon = s.at("horizon");
      info.writer_max = s.at("writer_max");
      info.sealed = true;
      segments_[info.id] = info;
    }
    const auto& t = j.at("totals");
    totals_.packets = t.at("packets");
    totals_.flows = t.at("flows");
    totals_.input_bytes = t.at("input_bytes");
    totals_.payload_bytes = t.at("payload_bytes");
    totals_.chunks = t.at("chunks");
    totals_.dedup_hits = t.at("dedup_hits");
    totals_.duplicate_bytes = t.at("duplicate_bytes");
    totals_.stored_chunk_bytes = t.at("stored_chunk_bytes");
    totals_.header_block_bytes = t.at("header_block_bytes");
    totals_.index_bytes = t.at("index_bytes");
    totals_.epochs_evicted = t.at("epochs_evicted");
    totals_.segments_evicted = t.at("segments_evicted");
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("manifest: ") + e.what());
  }
  // Sealed files must be at least as long as the manifest says.
  for (const auto& [id, e] : epochs_) {
    std::error_code ec;
    auto size = fs::file_size(header_log_path(id), ec);
    if (ec || size < kFileHeaderSize + e.log_bytes)
      throw IntegrityError("header log for epoch " + std::to_string(id) + " is short or missing");
  }
}

void Archive::open_segment(uint32_t id) {
  const std::string path = segment_path(id);
  writer_ = std::make_unique<File>(path, O_RDWR | O_CREAT | O_TRUNC);
  Bytes hdr = file_header(kSegmentMagic, id);
  write_all(writer_->fd, hdr, 0, path);
  SegmentInfo info;
  info.id = id;
  info.length = hdr.size();
  segments_[id] = info;
  current_segment_ = id;
  have_segment_ = true;
}

ChunkLocation Archive::append_chunk(ByteView record) {
  if (!writable_) throw UsageError("archive is read-only");
  std::lock_guard lk(mu_);
  if (have_segment_) {
    SegmentInfo& cur = segments_.at(current_segment_);
    if (cur.length > kFileHeaderSize && cur.length + record.size() > config_.segment_max_bytes) {
      sync_fd(writer_->fd, writer_->path);
      cur.sealed = true;
      writer_.reset();
      have_segment_ = false;
    }
  }
  if (!have_segment_) open_segment(next_segment_id_++);
  SegmentInfo& cur = segments_.at(current_segment_);
  if (cur.length + record.size() > (uint64_t{1} << ChunkLocation::kOffsetBits))
    throw StorageError("segment offset overflow");
  ChunkLocation loc{current_segment_, cur.length};
  write_all(writer_->fd, record, cur.length, writer_->path);
  cur.length += record.size();
  cur.writer_max = std::max(cur.writer_max, writer_epoch_);
  cur.horizon = std::max(cur.horizon, writer_epoch_);
  return loc;
}

void Archive::note_reference(ChunkLocation loc, uint64_t epoch_id) {
  std::lock_guard lk(mu_);
  auto it = segments_.find(loc.segment_id);
  if (it != segments_.end())
    it->second.horizon = std::max<int64_t>(it->second.horizon, static_cast<int64_t>(epoch_id));
}

Archive::File& Archive::segment_file(uint32_t id) const {
  auto it = segment_files_.find(id);
  if (it == segment_files_.end())
    it = segment_files_.emplace(id, std::make_shared<File>(segment_path(id), O_RDONLY)).first;
  return *it->second;
}

Bytes Archive::read_chunk(ChunkLocation loc) const {
  std::shared_ptr<File> file;
  uint64_t limit;
  {
    std::lock_guard lk(mu_);
    auto it = segments_.find(loc.segment_id);
    if (it == segments_.end())
      throw DataUnavailable("chunk " + loc.str() + ": segment evicted or never committed");
    limit = it->second.length;
    segment_file(loc.segment_id);
    file = segment_files_.at(loc.segment_id);
  }
  if (loc.offset < kFileHeaderSize || loc.offset >= limit)
    throw DataUnavailable("chunk " + loc.str() + ": offset outside segment");
  Bytes prefix = file->pread_some(loc.offset, 24);
  size_t size = chunk_record_size(prefix);
  if (loc.offset + size > limit)
    throw DataUnavailable("chunk " + loc.str() + ": record runs past end of segment");
  if (size <= prefix.size()) {
    prefix.resize(size);
    return prefix;
  }
  return file->pread_exact(loc.offset, size);
}

EpochInfo Archive::seal_epoch(uint64_t epoch_id, const std::vector<SealedFlow>& flows) {
  if (!writable_) throw UsageError("archive is read-only");
  if (flows.empty()) throw UsageError("seal_epoch: empty epoch");
  std::unique_lock lk(mu_);
  if (!epochs_.empty() && epoch_id <= epochs_.rbegin()->first)
    throw UsageError("epochs must be sealed in increasing order");

  EpochInfo info;
  info.id = epoch_id;
  info.base = next_log_offset_;
  info.first_ts = flows.front().first_ts;
  info.last_ts = flows.front().last_ts;

  Bytes log = file_header(kLogMagic, epoch_id);
  EpochIndexBuilder ip(epoch_id, IndexField::kIpAddr, info.base);
  EpochIndexBuilder port(epoch_id, IndexField::kPort, info.base);
  for (const auto& f : flows) {
    const uint64_t loc = info.base + (log.size() - kFileHeaderSize);
    ByteWriter w(log);
    w.u32le(static_cast<uint32_t>(f.block.size()));
    w.bytes(f.block);
    w.u32le(crc32_of(f.block));
    ip.insert_flow(f.key, loc);
    port.insert_flow(f.key, loc);
    info.flows++;
    info.packets += f.packets;
    info.first_ts = std::min(info.first_ts, f.first_ts);
    info.last_ts = std::max(info.last_ts, f.last_ts);
  }
  info.log_bytes = log.size() - kFileHeaderSize;
  EpochIndex ip_idx = ip.seal();
  EpochIndex port_idx = port.seal();
  info.ip_index_bytes = ip_idx.serialized().size();
  info.port_index_bytes = port_idx.serialized().size();

  write_file(header_log_path(epoch_id), log);
  write_file(index_path(epoch_id, IndexField::kIpAddr), ip_idx.serialized());
  write_file(index_path(epoch_id, IndexField::kPort), port_idx.serialized());
  sync_dir(config_.fast_dir + "/headers");
  sync_dir(config_.fast_dir + "/index");
  if (have_segment_) {
    sync_fd(writer_->fd, writer_->path);
    segments_.at(current_segment_).sealed = true;
    writer_.reset();
    have_segment_ = false;
    sync_dir(config_.bulk_dir + "/chunks");
  }

  epochs_[epoch_id] = info;
  next_log_offset_ = info.end_offset();
  index_cache_[{epoch_id, 0}] = std::make_shared<const EpochIndex>(std::move(ip_idx));
  index_cache_[{epoch_id, 1}] = std::make_shared<const EpochIndex>(std::move(port_idx));
  write_manifest();
  return info;
}

void Archive::finish(const ArchiveTotals& totals) {
  if (!writable_) throw UsageError("archive is read-only");
  std::unique_lock lk(mu_);
  if (have_segment_) {
    sync_fd(writer_->fd, writer_->path);
    segments_.at(current_segment_).sealed = true;
    writer_.reset();
    have_segment_ = false;
  }
  totals_ = totals;
  write_manifest();
}

std::vector<EpochInfo> Archive::epochs() const {
  std::lock_guard lk(mu_);
  std::vector<EpochInfo> out;
  for (const auto& [id, e] : epochs_) out.push_back(e);
  return out;
}

std::optional<EpochInfo> Archive::epoch(uint64_t id) const {
  std::lock_guard lk(mu_);
  auto it = epochs_.find(id);
  if (it == epochs_.end()) return std::nullopt;
  return it->second;
}

std::vector<SegmentInfo> Archive::segments() const {
  std::lock_guard lk(mu_);
  std::vector<SegmentInfo> out;
  for (const auto& [id, s] : segments_) out.push_back(s);
  return out;
}

ArchiveTotals Archive::totals() const {
  std::lock_guard lk(mu_);
  return totals_;
}

TierUsage Archive::usage() const {
  std::lock_guard lk(mu_);
  TierUsage u;
  std::error_code ec;
  for (const auto& [id, e] : epochs_)
    u.fast_bytes += kFileHeaderSize + e.log_bytes + e.ip_index_bytes + e.port_index_bytes;
  auto m = fs::file_size(manifest_path(), ec);
  if (!ec) u.fast_bytes += m;
  for (const auto& [id, s] : segments_) u.bulk_bytes += s.length;
  return u;
}

const EpochInfo* Archive::epoch_for_offset(uint64_t offset) const {
  auto it = std::upper_bound(epochs_.begin(), epochs_.end(), offset,
                             [](uint64_t off, const auto& kv) { return off < kv.second.base; });
  // epochs are keyed by id, and bases increase with id
  if (it == epochs_.begin()) return nullptr;
  --it;
  if (offset >= it->second.end_offset()) return nullptr;
  return &it->second;
}

Archive::File& Archive::log_file(uint64_t epoch_id) const {
  auto it = log_files_.find(epoch_id);
  if (it == log_files_.end())
    it = log_files_.emplace(epoch_id, std::make_shared<File>(header_log_path(epoch_id), O_RDONLY))
             .first;
  return *it->second;
}

Bytes Archive::read_header_block(FlowLocation loc) const {
  std::shared_ptr<File> file;
  EpochInfo info;
  {
    std::lock_guard lk(mu_);
    const EpochInfo* e = epoch_for_offset(loc.offset);
    if (!e) throw DataUnavailable("flow location " + std::to_string(loc.offset) + " is not in any live epoch");
    info = *e;
    log_file(e->id);
    file = log_files_.at(e->id);
  }
  const uint64_t pos = kFileHeaderSize + (loc.offset - info.base);
  if (loc.offset + kFrameOverhead > info.end_offset())
    throw IntegrityError("flow location " + std::to_string(loc.offset) + ": frame out of range");
  Bytes len_bytes = file->pread_exact(pos, 4);
  const uint32_t len = ByteReader(len_bytes).u32le();
  if (loc.offset + kFrameOverhead + len > info.end_offset())
    throw IntegrityError("flow location " + std::to_string(loc.offset) + ": bad frame length");
  Bytes frame = file->pread_exact(pos + 4, len + 4);
  ByteView block(frame.data(), len);
  uint32_t crc = ByteReader(ByteView(frame).subspan(len)).u32le();
  if (crc != crc32_of(block))
    throw IntegrityError("flow location " + std::to_string(loc.offset) + ": checksum mismatch");
  frame.resize(len);
  return frame;
}

void Archive::scan_epoch(uint64_t epoch_id,
                         const std::function<void(FlowLocation, ByteView)>& visit) const {
  std::shared_ptr<File> file;
  EpochInfo info;
  {
    std::lock_guard lk(mu_);
    auto it = epochs_.find(epoch_id);
    if (it == epochs_.end()) throw DataUnavailable("epoch " + std::to_string(epoch_id) + " is not live");
    info = it->second;
    log_file(epoch_id);
    file = log_files_.at(epoch_id);
  }
  Bytes log = file->pread_exact(kFileHeaderSize, info.log_bytes);
  ByteReader r(log, "header log");
  while (!r.done()) {
    const uint64_t at = info.base + r.pos();
    const uint32_t len = r.u32le();
    ByteView block = r.bytes(len);
    if (r.u32le() != crc32_of(block))
      throw IntegrityError("flow location " + std::to_string(at) + ": checksum mismatch");
    visit(FlowLocation{at}, block);
  }
}

std::shared_ptr<const EpochIndex> Archive::index(uint64_t epoch_id, IndexField field) const {
  std::lock_guard lk(mu_);
  auto key = std::make_pair(epoch_id, static_cast<int>(field));
  if (auto it = index_cache_.find(key); it != index_cache_.end()) return it->second;
  if (!epochs_.count(epoch_id)) throw DataUnavailable("epoch " + std::to_string(epoch_id) + " is not live");
  auto idx = std::make_shared<const EpochIndex>(EpochIndex::parse(read_file(index_path(epoch_id, field))));
  if (idx->epoch_id() != epoch_id || idx->field() != field)
    throw IntegrityError("index file for epoch " + std::to_string(epoch_id) + " is mislabelled");
  index_cache_[key] = idx;
  return idx;
}

Archive::EvictionReport Archive::evict_oldest(uint64_t retain_until, EvictionPolicy policy) {
  std::unique_lock elk(epoch_lock_);
  std::unique_lock lk(mu_);
  EvictionReport rep;
  std::vector<uint64_t> gone;
  for (const auto& [id, e] : epochs_)
    if (id < retain_until) gone.push_back(id);
  std::vector<uint32_t> gone_segs;
  for (const auto& [id, s] : segments_) {
    if (!s.sealed) continue;
    const int64_t mark = policy == EvictionPolicy::kHorizon ? s.horizon : s.writer_max;
    if (mark < static_cast<int64_t>(retain_until)) gone_segs.push_back(id);
  }
  if (gone.empty() && gone_segs.empty()) return rep;

  // Publish the shrunken manifest first so a crash never leaves it naming
  // deleted files.
  for (uint64_t id : gone) {
    epochs_.erase(id);
    log_files_.erase(id);
    index_cache_.erase({id, 0});
    index_cache_.erase({id, 1});
  }
  for (uint32_t id : gone_segs) {
    rep.bulk_bytes_freed += segments_.at(id).length;
    segments_.erase(id);
    segment_files_.erase(id);
  }
  totals_.epochs_evicted += gone.size();
  totals_.segments_evicted += gone_segs.size();
  write_manifest();

  for (uint64_t id : gone) {
    rep.fast_bytes_freed += remove_file(header_log_path(id));
    rep.fast_bytes_freed += remove_file(index_path(id, IndexField::kIpAddr));
    rep.fast_bytes_freed += remove_file(index_path(id, IndexField::kPort));
  }
  for (uint32_t id : gone_segs) remove_file(segment_path(id));
  rep.epochs_removed = gone.size();
  rep.segments_removed = gone_segs.size();
  return rep;
}

}  // namespace flowvault
