#include "flowvault/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "flowvault/online.hpp"
#include "flowvault/pcap.hpp"
#include "flowvault/query.hpp"
#include "flowvault/recorder.hpp"
#include "flowvault/workload.hpp"

namespace flowvault {

namespace {

using Rows = std::vector<std::pair<std::string, std::string>>;

template <typename T>
std::string str(const T& v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

// Wall-clock fields; left out of csv so it stays identical across runs.
bool is_timing(const std::string& key) {
  return key == "seconds" || key == "gbps" || key == "packets_per_second" ||
         (key.size() > 8 && key.compare(key.size() - 8, 8, "_seconds") == 0 && key != "epoch_seconds" &&
          key != "dedup_window_seconds");
}

void print_rows(std::ostream& out, const Rows& all, const std::string& format) {
  if (format == "csv") {
    Rows rows;
    for (const auto& r : all)
      if (!is_timing(r.first)) rows.push_back(r);
    for (size_t i = 0; i < rows.size(); ++i) out << (i ? "," : "") << rows[i].first;
    out << "\n";
    for (size_t i = 0; i < rows.size(); ++i) out << (i ? "," : "") << rows[i].second;
    out << "\n";
    return;
  }
  const Rows& rows = all;
  size_t w = 0;
  for (const auto& r : rows) w = std::max(w, r.first.size());
  for (const auto& r : rows) out << std::left << std::setw(int(w) + 2) << (r.first + ":") << r.second << "\n";
}

Rows totals_rows(const ArchiveTotals& t) {
  return {{"packets", str(t.packets)},
          {"flows", str(t.flows)},
          {"input_bytes", str(t.input_bytes)},
          {"payload_bytes", str(t.payload_bytes)},
          {"chunks", str(t.chunks)},
          {"dedup_hits", str(t.dedup_hits)},
          {"duplicate_bytes", str(t.duplicate_bytes)},
          {"stored_chunk_bytes", str(t.stored_chunk_bytes)},
          {"header_block_bytes", str(t.header_block_bytes)},
          {"index_bytes", str(t.index_bytes)}};
}

Rows record_rows(const RecordReport& r) {
  Rows rows = totals_rows(r.totals());
  rows.insert(rows.end(), {{"epochs", str(r.epochs)},
                           {"raw_header_bytes", str(r.raw_header_bytes)},
                           {"header_only_bytes", str(r.header_only_bytes)},
                           {"peak_index_entries", str(r.peak_index_entries)},
                           {"timestamp_regressions", str(r.timestamp_regressions)},
                           {"late_flows", str(r.late_flows)},
                           {"ingest_seconds", fixed(r.ingest_seconds, 3)},
                           {"compress_seconds", fixed(r.compress_seconds, 3)},
                           {"commit_seconds", fixed(r.commit_seconds, 3)},
                           {"wall_seconds", fixed(r.wall_seconds, 3)},
                           {"packets_per_second", fixed(r.packets_per_second(), 1)},
                           {"gbps", fixed(r.gbps(), 4)}});
  return rows;
}

Rows query_rows(const QueryResult& r, Retrieval mode) {
  Rows rows;
  if (mode == Retrieval::kExistence) rows.push_back({"exists", r.exists ? "true" : "false"});
  rows.insert(rows.end(), {{"matched_flows", str(r.flow_count)},
                           {"packets", str(r.packet_count)},
                           {"unavailable_flows", str(r.errors.size())},
                           {"epochs_touched", str(r.stats.epochs_touched)},
                           {"candidates", str(r.stats.candidates)},
                           {"false_positives", str(r.stats.false_positives)},
                           {"blocks_read", str(r.stats.blocks_read)},
                           {"blocks_decompressed", str(r.stats.blocks_decompressed)},
                           {"full_scans", str(r.stats.full_scans)},
                           {"chunks_read", str(r.stats.chunks_read)},
                           {"work_units", str(r.stats.units)},
                           {"seconds", fixed(r.stats.seconds, 6)}});
  return rows;
}

std::string default_archive() {
  const char* v = std::getenv(kArchiveEnv);
  return v ? v : "";
}

std::string need_archive(const std::string& dir) {
  if (!dir.empty()) return dir;
  throw UsageError(std::string("no archive given: pass --archive or set ") + kArchiveEnv);
}

struct RecordFlags {
  std::string in = "-";
  std::string fast_dir = default_archive();
  std::string bulk_dir;
  double epoch = 60;
  double mfd = 300;
  double idle = 15;
  uint64_t max_buffer = uint64_t{1} << 30;
  std::string chunking = "cdc:4096";
  double dedup_window = 3600;
  unsigned workers = 0;
  size_t queue_depth = 64;
  bool no_dict = false;
  uint64_t segment_bytes = uint64_t{1} << 30;

  void add(CLI::App* app, bool with_input) {
    if (with_input) app->add_option("--in", in, "input pcap, '-' for stdin")->capture_default_str();
    app->add_option("--fast-dir", fast_dir, std::string("fast tier directory (default $") + kArchiveEnv + ")");
    app->add_option("--bulk-dir", bulk_dir, "bulk tier directory (default: the fast tier directory)");
    app->add_option("--epoch", epoch, "epoch length, seconds")->capture_default_str();
    app->add_option("--mfd", mfd, "maximum flow duration, seconds")->capture_default_str();
    app->add_option("--idle-timeout", idle, "flow idle timeout, seconds")->capture_default_str();
    app->add_option("--max-buffer-bytes", max_buffer, "grouper memory cap")->capture_default_str();
    app->add_option("--chunking", chunking, "cdc:<size>, fixed:<size> or none")->capture_default_str();
    app->add_option("--dedup-window", dedup_window, "dedup window, seconds (0 disables)")->capture_default_str();
    app->add_option("--workers", workers, "compression workers (0 = one per core)")->capture_default_str();
    app->add_option("--queue-depth", queue_depth, "flows queued per worker")->capture_default_str();
    app->add_flag("--no-dict", no_dict, "skip the dictionary compression pass");
    app->add_option("--segment-bytes", segment_bytes, "chunk segment size limit")->capture_default_str();
  }

  PipelineConfig config(const std::string& fast) const {
    PipelineConfig c;
    c.archive.fast_dir = need_archive(fast);
    c.archive.bulk_dir = bulk_dir.empty() ? c.archive.fast_dir : bulk_dir;
    c.archive.epoch_seconds = epoch;
    c.archive.mfd = mfd;
    c.archive.idle_timeout = idle;
    c.archive.chunking = ChunkingConfig::parse(chunking);
    c.archive.dedup_window_seconds = dedup_window;
    c.archive.dictionary_compression = !no_dict;
    c.archive.segment_max_bytes = segment_bytes;
    c.max_buffered_bytes = max_buffer;
    c.workers = workers;
    c.queue_depth = queue_depth;
    c.validate();
    return c;
  }
};

uint8_t parse_proto(const std::string& s) {
  if (s == "tcp") return 6;
  if (s == "udp") return 17;
  if (s == "icmp") return 1;
  try {
    size_t used = 0;
    unsigned long v = std::stoul(s, &used);
    if (used == s.size() && v <= 255) return static_cast<uint8_t>(v);
  } catch (const std::exception&) {
  }
  throw UsageError("protocol must be tcp, udp, icmp or 0-255, got '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

class OutFile {
 public:
  explicit OutFile(const std::string& path, std::ostream& stdout_stream) {
    if (path == "-") {
      os_ = &stdout_stream;
    } else {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw StorageError("cannot write " + path);
      os_ = &file_;
    }
  }
  std::ostream& stream() { return *os_; }
  void close(const std::string& path) {
    if (file_.is_open()) {
      file_.close();
      if (!file_) throw StorageError("write to " + path + " failed");
    } else {
      os_->flush();
    }
  }

 private:
  std::ofstream file_;
  std::ostream* os_ = nullptr;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"flowvault: lossless packet archive with flow indexes"};
  app.name("flowvault");
  app.require_subcommand(1);
  std::string format = "text";
  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", format, "report format")->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  };

  // record
  RecordFlags rf;
  auto* rec = app.add_subcommand("record", "record a pcap into a new archive");
  rf.add(rec, true);
  add_format(rec);

  // query
  std::string q_archive = default_archive(), q_bulk, q_range = "entire", q_retrieve = "full", q_mode = "offline",
              q_out = "-";
  std::string q_src_ip, q_dst_ip, q_ip, q_proto;
  std::optional<uint16_t> q_src_port, q_dst_port, q_port;
  double q_rate = 0;
  uint64_t q_after = 0;
  RecordFlags qrf;
  auto* qry = app.add_subcommand("query", "query an archive");
  qry->add_option("--archive", q_archive, std::string("archive (fast tier) directory (default $") + kArchiveEnv + ")");
  qry->add_option("--bulk-dir", q_bulk, "bulk tier directory if it moved");
  qry->add_option("--range", q_range, "entire, last:<sec> or <t0>:<t1>")->capture_default_str();
  qry->add_option("--src-ip", q_src_ip);
  qry->add_option("--dst-ip", q_dst_ip);
  qry->add_option("--ip", q_ip, "either endpoint");
  qry->add_option("--src-port", q_src_port);
  qry->add_option("--dst-port", q_dst_port);
  qry->add_option("--port", q_port, "either endpoint");
  qry->add_option("--proto", q_proto, "tcp, udp, icmp or a number");
  qry->add_option("--retrieve", q_retrieve)->check(CLI::IsMember({"exists", "headers", "full"}))->capture_default_str();
  qry->add_option("--mode", q_mode, "online records --in into --archive while querying")
      ->check(CLI::IsMember({"offline", "online"}))
      ->capture_default_str();
  qry->add_option("--out", q_out, "pcap output, '-' for stdout")->capture_default_str();
  qry->add_option("--in", qrf.in, "online: pcap to record");
  qry->add_option("--rate", q_rate, "online: capture pacing, packets per second (0 = unpaced)");
  qry->add_option("--after", q_after, "online: issue the query after this many packets");
  qry->add_option("--epoch", qrf.epoch, "online: epoch length, seconds");
  qry->add_option("--chunking", qrf.chunking, "online: chunking");
  qry->add_option("--dedup-window", qrf.dedup_window, "online: dedup window, seconds");
  qry->add_option("--workers", qrf.workers, "online: compression workers");
  add_format(qry);

  // evict
  std::string e_archive = default_archive(), e_bulk, e_policy = "horizon";
  uint64_t e_retain = 0;
  auto* evc = app.add_subcommand("evict", "drop the oldest epochs");
  evc->add_option("--archive", e_archive, "archive (fast tier) directory");
  evc->add_option("--bulk-dir", e_bulk, "bulk tier directory if it moved");
  evc->add_option("--retain-epochs", e_retain, "keep the newest N epochs")->required();
  evc->add_option("--policy", e_policy, "horizon or epoch-only")
      ->check(CLI::IsMember({"horizon", "epoch-only"}))
      ->capture_default_str();
  add_format(evc);

  // gen
  TraceSpec ts;
  std::string g_out = "-", g_payload = "nr", g_link = "ethernet";
  auto* gen = app.add_subcommand("gen", "generate a synthetic trace");
  gen->add_option("--out", g_out, "pcap output, '-' for stdout")->capture_default_str();
  gen->add_option("--seed", ts.seed)->capture_default_str();
  gen->add_option("--start", ts.start, "first arrival, seconds")->capture_default_str();
  gen->add_option("--duration", ts.duration, "seconds of connection arrivals (0 = until --packets)")
      ->capture_default_str();
  gen->add_option("--packets", ts.max_packets, "stop after this many packets (0 = no cap)")->capture_default_str();
  gen->add_option("--rate", ts.conn_rate, "new connections per second")->capture_default_str();
  gen->add_option("--payload", g_payload, "re, nr or dup:<fraction>:<gap>")->capture_default_str();
  gen->add_option("--tcp", ts.tcp_share)->capture_default_str();
  gen->add_option("--udp", ts.udp_share)->capture_default_str();
  gen->add_option("--icmp", ts.icmp_share)->capture_default_str();
  gen->add_option("--arp", ts.arp_share)->capture_default_str();
  gen->add_option("--short-mean", ts.short_data_mean, "mean data segments, short responses")->capture_default_str();
  gen->add_option("--long-mean", ts.long_data_mean, "mean data segments, long responses")->capture_default_str();
  gen->add_option("--long-share", ts.long_share)->capture_default_str();
  gen->add_option("--full-share", ts.full_size_share, "share of full-MSS data segments")->capture_default_str();
  gen->add_option("--mss", ts.mss)->capture_default_str();
  gen->add_option("--clients", ts.client_hosts)->capture_default_str();
  gen->add_option("--servers", ts.server_hosts)->capture_default_str();
  gen->add_option("--link", g_link)->check(CLI::IsMember({"ethernet", "raw"}))->capture_default_str();
  add_format(gen);

  // sweep
  std::string s_in, s_configs = "cdc:4096", s_windows = "0,60,600,3600";
  double s_mfd = 300, s_idle = 15;
  CostModel s_cost;
  auto* swp = app.add_subcommand("sweep", "dedup window and chunking trade-off table");
  swp->add_option("--in", s_in, "input pcap")->required();
  swp->add_option("--configs", s_configs, "comma-separated chunking configs")->capture_default_str();
  swp->add_option("--windows", s_windows, "comma-separated windows, seconds")->capture_default_str();
  swp->add_option("--mfd", s_mfd)->capture_default_str();
  swp->add_option("--idle-timeout", s_idle)->capture_default_str();
  swp->add_option("--fast-price", s_cost.fast_price, "$ per GB")->capture_default_str();
  swp->add_option("--bulk-price", s_cost.bulk_price, "$ per GB")->capture_default_str();
  add_format(swp);

  // stats
  std::string st_archive = default_archive(), st_bulk;
  CostModel st_cost;
  bool st_epochs = false;
  auto* sts = app.add_subcommand("stats", "archive totals, tiers and cost");
  sts->add_option("--archive", st_archive, "archive (fast tier) directory");
  sts->add_option("--bulk-dir", st_bulk, "bulk tier directory if it moved");
  sts->add_option("--fast-price", st_cost.fast_price, "$ per GB")->capture_default_str();
  sts->add_option("--bulk-price", st_cost.bulk_price, "$ per GB")->capture_default_str();
  sts->add_flag("--epochs", st_epochs, "also list epochs");
  add_format(sts);

  std::vector<const char*> argv{"flowvault"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*rec) {
      PipelineConfig cfg = rf.config(rf.fast_dir);
      RecordReport r = record_file(rf.in, cfg);
      print_rows(out, record_rows(r), format);
      return 0;
    }

    if (*qry) {
      Query q;
      q.range = TimeRange::parse(q_range);
      if (!q_src_ip.empty()) q.criteria.src_ip = parse_ipv4(q_src_ip);
      if (!q_dst_ip.empty()) q.criteria.dst_ip = parse_ipv4(q_dst_ip);
      if (!q_ip.empty()) q.criteria.any_ip = parse_ipv4(q_ip);
      q.criteria.src_port = q_src_port;
      q.criteria.dst_port = q_dst_port;
      q.criteria.any_port = q_port;
      if (!q_proto.empty()) q.criteria.protocol = parse_proto(q_proto);
      q.retrieval = q_retrieve == "exists" ? Retrieval::kExistence
                    : q_retrieve == "headers" ? Retrieval::kHeaders
                                              : Retrieval::kFull;
      const bool pcap_out = q.retrieval != Retrieval::kExistence;
      std::ostream& report = pcap_out && q_out == "-" ? err : out;

      QueryResult result;
      if (q_mode == "online") {
        if (qrf.in.empty() || qrf.in == "-") throw UsageError("online mode needs --in <pcap> to record");
        std::ifstream in(qrf.in, std::ios::binary);
        if (!in) throw UsageError("cannot open input " + qrf.in);
        PcapReader reader(in);
        PipelineConfig cfg = qrf.config(q_archive);
        cfg.archive.link_type = reader.link_type();
        OnlineConfig oc;
        oc.rate_pps = q_rate;
        OnlineReport rep = run_online(cfg, oc, [&] { return reader.next(); }, {{q, q_after}});
        result = std::move(rep.queries.at(0).result);
        if (pcap_out) {
          OutFile f(q_out, out);
          f.stream().write(reinterpret_cast<const char*>(result.pcap.data()),
                           static_cast<std::streamsize>(result.pcap.size()));
          f.close(q_out);
        }
        Rows rows = query_rows(result, q.retrieval);
        rows.insert(rows.end(), {{"recorded_packets", str(rep.record.packets)},
                                 {"dropped_packets", str(rep.dropped)},
                                 {"snapshot_epochs", str(rep.queries.at(0).snapshot.size())}});
        if (q.retrieval == Retrieval::kExistence && format == "text") out << (result.exists ? "true" : "false") << "\n";
        print_rows(report, rows, format);
      } else {
        auto archive = Archive::open(need_archive(q_archive),
                                     q_bulk.empty() ? std::nullopt : std::optional<std::string>(q_bulk));
        QueryEngine engine(*archive);
        if (pcap_out) {
          OutFile f(q_out, out);
          result = engine.execute(q, &f.stream());
          f.close(q_out);
        } else {
          result = engine.execute(q);
        }
        if (q.retrieval == Retrieval::kExistence && format == "text") out << (result.exists ? "true" : "false") << "\n";
        print_rows(report, query_rows(result, q.retrieval), format);
      }
      for (const auto& e : result.errors) err << "error: " << e.message << "\n";
      return result.errors.empty() ? 0 : 2;
    }

    if (*evc) {
      auto archive = Archive::open(need_archive(e_archive),
                                   e_bulk.empty() ? std::nullopt : std::optional<std::string>(e_bulk));
      const auto eps = archive->epochs();
      uint64_t retain_until = 0;
      if (e_retain == 0 && !eps.empty())
        retain_until = eps.back().id + 1;
      else if (eps.size() > e_retain)
        retain_until = eps[eps.size() - e_retain].id;
      auto r = archive->evict_oldest(retain_until, e_policy == "horizon" ? EvictionPolicy::kHorizon
                                                                          : EvictionPolicy::kEpochOnly);
      print_rows(out,
                 {{"epochs_removed", str(r.epochs_removed)},
                  {"segments_removed", str(r.segments_removed)},
                  {"fast_bytes_freed", str(r.fast_bytes_freed)},
                  {"bulk_bytes_freed", str(r.bulk_bytes_freed)},
                  {"epochs_retained", str(archive->epochs().size())}},
                 format);
      return 0;
    }

    if (*gen) {
      TraceSpec::parse_payload(g_payload, ts);
      ts.link_type = g_link == "raw" ? kLinkRaw : kLinkEthernet;
      ts.validate();
      OutFile f(g_out, out);
      TraceStats s = generate_trace(ts, f.stream());
      f.close(g_out);
      std::ostream& report = g_out == "-" ? err : out;
      print_rows(report,
                 {{"packets", str(s.packets)},
                  {"connections", str(s.connections)},
                  {"bytes", str(s.bytes)},
                  {"mean_packet_size", fixed(s.mean_packet_size(), 1)},
                  {"payload_bytes", str(s.payload_bytes)},
                  {"dup_connections", str(s.dup_connections)},
                  {"dup_payload_bytes", str(s.dup_payload_bytes)}},
                 format);
      return 0;
    }

    if (*swp) {
      SweepOptions o;
      for (const auto& c : split(s_configs, ',')) o.configs.push_back(ChunkingConfig::parse(c));
      for (const auto& w : split(s_windows, ',')) {
        try {
          o.windows.push_back(std::stod(w));
        } catch (const std::exception&) {
          throw UsageError("bad window '" + w + "'");
        }
      }
      o.grouper.mfd = s_mfd;
      o.grouper.idle_timeout = s_idle;
      o.cost = s_cost;
      SweepReport r = dedup_window_sweep_file(s_in, o);
      out << (format == "csv" ? r.to_csv() : r.to_text());
      return 0;
    }

    if (*sts) {
      auto archive = Archive::open(need_archive(st_archive),
                                   st_bulk.empty() ? std::nullopt : std::optional<std::string>(st_bulk));
      const auto eps = archive->epochs();
      const TierUsage u = archive->usage();
      const ArchiveTotals t = archive->totals();
      Rows rows = totals_rows(t);
      rows.insert(rows.end(), {{"epochs", str(eps.size())},
                               {"first_epoch", eps.empty() ? "-" : str(eps.front().id)},
                               {"last_epoch", eps.empty() ? "-" : str(eps.back().id)},
                               {"segments", str(archive->segments().size())},
                               {"epochs_evicted", str(t.epochs_evicted)},
                               {"segments_evicted", str(t.segments_evicted)},
                               {"fast_tier_bytes", str(u.fast_bytes)},
                               {"bulk_tier_bytes", str(u.bulk_bytes)},
                               {"storage_cost_usd", fixed(storage_cost(u, st_cost), 6)},
                               {"chunking", archive->config().chunking.str()},
                               {"epoch_seconds", str(archive->config().epoch_seconds)},
                               {"dedup_window_seconds", str(archive->config().dedup_window_seconds)}});
      print_rows(out, rows, format);
      if (st_epochs) {
        out << (format == "csv" ? "" : "\n") << "epoch,first_ts,last_ts,flows,packets,log_bytes,ip_index_bytes,port_index_bytes\n";
        for (const auto& e : eps)
          out << e.id << ',' << e.first_ts << ',' << e.last_ts << ',' << e.flows << ',' << e.packets << ','
              << e.log_bytes << ',' << e.ip_index_bytes << ',' << e.port_index_bytes << "\n";
      }
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace flowvault
