#include "flowvault/query.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>

#include "flowvault/pcap.hpp"

namespace flowvault {

namespace {

Micros parse_seconds(const std::string& s, const std::string& whole) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !(v >= 0) || !std::isfinite(v))
    throw UsageError("bad time value in range '" + whole + "'");
  return seconds_to_micros(v);
}

std::string fmt_seconds(Micros us) {
  std::ostringstream o;
  o << us / 1'000'000;
  if (us % 1'000'000) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06u", static_cast<unsigned>(us % 1'000'000));
    std::string frac = buf;
    while (frac.back() == '0') frac.pop_back();
    o << '.' << frac;
  }
  return o.str();
}

}  // namespace

TimeRange TimeRange::last_seconds(double s) {
  if (!(s >= 0)) throw UsageError("last: needs a non-negative duration");
  TimeRange r;
  r.kind = Kind::kLast;
  r.last = seconds_to_micros(s);
  return r;
}

TimeRange TimeRange::between(Micros t0, Micros t1) {
  if (t1 < t0) throw UsageError("time range end precedes start");
  TimeRange r;
  r.kind = Kind::kBetween;
  r.t0 = t0;
  r.t1 = t1;
  return r;
}

TimeRange TimeRange::parse(const std::string& text) {
  if (text == "entire") return entire();
  if (text.rfind("last:", 0) == 0) {
    TimeRange r;
    r.kind = Kind::kLast;
    r.last = parse_seconds(text.substr(5), text);
    return r;
  }
  auto colon = text.find(':');
  if (colon == std::string::npos)
    throw UsageError("range must be entire, last:<sec> or <t0>:<t1>, got '" + text + "'");
  return between(parse_seconds(text.substr(0, colon), text), parse_seconds(text.substr(colon + 1), text));
}

std::string TimeRange::str() const {
  switch (kind) {
    case Kind::kEntire:
      return "entire";
    case Kind::kLast:
      return "last:" + fmt_seconds(last);
    case Kind::kBetween:
      return fmt_seconds(t0) + ":" + fmt_seconds(t1);
  }
  return "?";
}

bool Criteria::matches(const FlowKey& k) const {
  if (src_ip && k.src_ip != *src_ip) return false;
  if (dst_ip && k.dst_ip != *dst_ip) return false;
  if (any_ip && k.src_ip != *any_ip && k.dst_ip != *any_ip) return false;
  if (src_port && k.src_port != *src_port) return false;
  if (dst_port && k.dst_port != *dst_port) return false;
  if (any_port && k.src_port != *any_port && k.dst_port != *any_port) return false;
  if (protocol && k.protocol != *protocol) return false;
  return true;
}

std::string Criteria::str() const {
  std::string s;
  auto add = [&](const std::string& part) { s += (s.empty() ? "" : " ") + part; };
  if (src_ip) add("src-ip=" + format_ipv4(*src_ip));
  if (dst_ip) add("dst-ip=" + format_ipv4(*dst_ip));
  if (any_ip) add("ip=" + format_ipv4(*any_ip));
  if (src_port) add("src-port=" + std::to_string(*src_port));
  if (dst_port) add("dst-port=" + std::to_string(*dst_port));
  if (any_port) add("port=" + std::to_string(*any_port));
  if (protocol) add("proto=" + std::to_string(*protocol));
  return s.empty() ? "(none)" : s;
}

std::vector<uint64_t> select_epochs(const std::vector<EpochInfo>& snapshot, Micros epoch_len,
                                    const TimeRange& range) {
  std::vector<uint64_t> out;
  if (snapshot.empty()) return out;
  Micros t0 = 0, t1 = UINT64_MAX;
  if (range.kind == TimeRange::Kind::kLast) {
    const Micros end = (snapshot.back().id + 1) * epoch_len;
    t0 = range.last >= end ? 0 : end - range.last;
    t1 = end;
  } else if (range.kind == TimeRange::Kind::kBetween) {
    t0 = range.t0;
    t1 = range.t1;
  }
  for (const auto& e : snapshot) {
    const Micros start = e.id * epoch_len;
    const Micros stop = start + epoch_len;
    if (start < t1 && stop > t0) out.push_back(e.id);
  }
  return out;
}

QueryTask::QueryTask(const Archive& archive, Query query)
    : QueryTask(archive, std::move(query), archive.epochs()) {}

QueryTask::QueryTask(const Archive& archive, Query query, const std::vector<EpochInfo>& snapshot)
    : archive_(&archive), query_(std::move(query)), snapshot_(snapshot) {
  epochs_ = select_epochs(snapshot_, archive.config().epoch_micros(), query_.range);
  if (epochs_.empty()) phase_ = Phase::kDone;
}

void QueryTask::lookup_epoch(uint64_t epoch_id) {
  ++stats_.epochs_touched;
  candidates_.clear();
  prechecked_.clear();
  cand_cursor_ = 0;
  const Criteria& c = query_.criteria;
  if (!c.has_indexed()) {
    // Nothing indexed to narrow by: scan the epoch's log.
    ++stats_.full_scans;
    archive_->scan_epoch(epoch_id, [&](FlowLocation loc, ByteView block) {
      ++stats_.candidates;
      ++stats_.blocks_read;
      if (c.matches(CompressedHeaderBlock::peek_key(block))) {
        candidates_.push_back(loc.offset);
        prechecked_.push_back(1);
      } else {
        ++stats_.false_positives;
      }
    });
    return;
  }
  std::vector<std::vector<uint64_t>> lists;
  auto ip = [&]() { return archive_->index(epoch_id, IndexField::kIpAddr); };
  auto port = [&]() { return archive_->index(epoch_id, IndexField::kPort); };
  if (c.src_ip) lists.push_back(ip()->lookup_ip(*c.src_ip));
  if (c.dst_ip) lists.push_back(ip()->lookup_ip(*c.dst_ip));
  if (c.any_ip) lists.push_back(ip()->lookup_ip(*c.any_ip));
  if (c.src_port) lists.push_back(port()->lookup_port(*c.src_port));
  if (c.dst_port) lists.push_back(port()->lookup_port(*c.dst_port));
  if (c.any_port) lists.push_back(port()->lookup_port(*c.any_port));
  candidates_ = intersect(lists);
  prechecked_.assign(candidates_.size(), 0);
  stats_.candidates += candidates_.size();
}

void QueryTask::take_flow(FlowLocation loc, const Bytes& block) {
  matches_.push_back(loc);
  if (query_.retrieval == Retrieval::kExistence) return;
  CompressedHeaderBlock b = CompressedHeaderBlock::parse(block);
  ++stats_.blocks_decompressed;
  std::vector<DecodedHeader> hdrs;
  try {
    hdrs = decompress_headers(b);
  } catch (const IntegrityError& e) {
    throw IntegrityError("flow at location " + std::to_string(loc.offset) + ": " + e.what());
  }
  if (query_.retrieval == Retrieval::kHeaders) {
    for (auto& h : hdrs) packets_.push_back({h.ts, h.tie_rank, h.original_len, std::move(h.header)});
    return;
  }
  std::vector<uint32_t> lengths;
  lengths.reserve(hdrs.size());
  for (const auto& h : hdrs) lengths.push_back(static_cast<uint32_t>(h.payload_len));
  std::vector<Bytes> payloads;
  try {
    payloads = read_and_reassemble(b.chunk_refs, lengths, *archive_);
  } catch (const DataUnavailable& e) {
    errors_.push_back({loc, e.what()});
    return;
  }
  stats_.chunks_read += b.chunk_refs.size();
  for (size_t i = 0; i < hdrs.size(); ++i) {
    Bytes data = std::move(hdrs[i].header);
    data.insert(data.end(), payloads[i].begin(), payloads[i].end());
    packets_.push_back({hdrs[i].ts, hdrs[i].tie_rank, hdrs[i].original_len, std::move(data)});
  }
}

void QueryTask::verify_batch() {
  const size_t end = std::min(candidates_.size(), cand_cursor_ + kFlowsPerUnit);
  for (; cand_cursor_ < end; ++cand_cursor_) {
    const FlowLocation loc{candidates_[cand_cursor_]};
    Bytes block = archive_->read_header_block(loc);
    if (!prechecked_[cand_cursor_]) {
      ++stats_.blocks_read;
      if (!query_.criteria.matches(CompressedHeaderBlock::peek_key(block))) {
        ++stats_.false_positives;
        continue;
      }
    }
    take_flow(loc, block);
    if (query_.retrieval == Retrieval::kExistence) {
      phase_ = Phase::kDone;
      return;
    }
  }
}

bool QueryTask::step() {
  if (phase_ == Phase::kDone) return true;
  const auto t = std::chrono::steady_clock::now();
  auto lock = archive_->read_lock();
  ++stats_.units;
  if (phase_ == Phase::kLookup) {
    lookup_epoch(epochs_[epoch_cursor_]);
    phase_ = Phase::kVerify;
  } else {
    verify_batch();
  }
  if (phase_ == Phase::kVerify && cand_cursor_ >= candidates_.size()) {
    ++epoch_cursor_;
    phase_ = epoch_cursor_ < epochs_.size() ? Phase::kLookup : Phase::kDone;
  }
  stats_.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
  return phase_ == Phase::kDone;
}

QueryResult QueryTask::finish(std::ostream* out) {
  if (!done()) throw UsageError("query task is not complete");
  QueryResult r;
  r.exists = !matches_.empty();
  r.flow_count = matches_.size();
  r.locations = matches_;
  std::sort(r.locations.begin(), r.locations.end());
  r.errors = errors_;
  r.stats = stats_;
  if (query_.retrieval == Retrieval::kExistence) return r;
  std::sort(packets_.begin(), packets_.end(), [](const Rec& a, const Rec& b) {
    return a.ts != b.ts ? a.ts < b.ts : a.tie_rank < b.tie_rank;
  });
  r.packet_count = packets_.size();
  std::ostringstream buf;
  std::ostream& os = out ? *out : static_cast<std::ostream&>(buf);
  PcapWriter w(os, archive_->config().link_type);
  for (const auto& p : packets_) w.write(p.ts, p.data, std::max<uint32_t>(p.original_len, p.data.size()));
  if (!out) {
    const std::string s = buf.str();
    r.pcap.assign(s.begin(), s.end());
  }
  return r;
}

QueryResult QueryEngine::execute(const Query& q, std::ostream* out) const {
  QueryTask task(archive_, q);
  while (!task.step()) {
  }
  return task.finish(out);
}

}  // namespace flowvault
