// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "flowvault/compressor.hpp"
#include "flowvault/online.hpp"
#include "flowvault/query.hpp"
#include "flowvault/recorder.hpp"
#include "flowvault/workload.hpp"
#include "support/oracle.hpp"
#include "support/recording.hpp"
#include "support/tempdir.hpp"

using namespace flowvault;
using fvtest::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

const Micros S = 1'000'000;

std::set<uint64_t> epoch_ids(const Archive& a) {
  std::set<uint64_t> s;
  for (const auto& e : a.epochs()) s.insert(e.id);
  return s;
}

// Runs `n` random queries against the oracle. Returns mismatches; the
// first few are described in `notes`.
struct OracleRun {
  uint64_t queries = 0, mismatches = 0, unavailable = 0, nonempty = 0;
  // index work bound
  uint64_t indexed = 0, bound_violations = 0, nohit_all_indexed = 0, nohit_scans = 0;
  std::string first_problem;
};

OracleRun oracle_suite(const Archive& a, const std::vector<Packet>& trace, uint32_t link,
                       const std::vector<fvtest::OFlow>& flows, double epoch_s, int n, uint64_t seed) {
  OracleRun run;
  std::mt19937_64 rng(seed);
  const auto retained = epoch_ids(a);
  const Micros t0 = trace.front().ts(), t1 = trace.back().ts() + 1;
  QueryEngine engine(a);
  for (int i = 0; i < n; ++i) {
    Query q = fvtest::random_query(rng, flows, t0 > 5 * S ? t0 - 5 * S : 0, t1 + 5 * S);
    auto want = fvtest::expected_result(trace, link, flows, retained, epoch_s, q);
    QueryResult got = engine.execute(q);
    ++run.queries;
    run.unavailable += got.errors.size();
    run.nonempty += want.exists;
    std::string diff = fvtest::compare(want, got, q.retrieval);
    if (!diff.empty()) {
      ++run.mismatches;
      if (run.first_problem.empty())
        run.first_problem = "query " + std::to_string(i) + " [" + q.criteria.str() + " " + q.range.str() + "]: " + diff;
    }
    if (q.criteria.has_indexed()) {
      ++run.indexed;
      const bool bounded = got.stats.full_scans == 0 &&
                           got.stats.blocks_decompressed <= got.flow_count + got.stats.false_positives &&
                           (q.retrieval == Retrieval::kExistence ||
                            got.stats.candidates == got.flow_count + got.stats.false_positives);
      if (!bounded) ++run.bound_violations;
      if (!q.criteria.protocol && !want.exists) {
        ++run.nohit_all_indexed;
        run.nohit_scans += got.stats.full_scans;
      }
    }
  }
  return run;
}

std::vector<Packet> load(const TraceSpec& s, TraceStats* st = nullptr) { return generate_packets(s, st); }

// ---------------------------------------------------------------------------

Outcome ac1_round_trip() {
  struct Case {
    uint64_t packets;
    PayloadModel model;
    uint32_t link;
    const char* chunking;
    unsigned workers;
    double epoch;
  };
  const std::vector<Case> cases = {
      {10'000, PayloadModel::kNr, kLinkEthernet, "cdc:4096", 1, 60},
      {15'000, PayloadModel::kRe, kLinkEthernet, "cdc:4096", 2, 10},
      {20'000, PayloadModel::kDup, kLinkEthernet, "cdc:4096", 1, 30},
      {30'000, PayloadModel::kNr, kLinkRaw, "fixed:1024", 3, 60},
      {40'000, PayloadModel::kRe, kLinkRaw, "none", 1, 15},
      {50'000, PayloadModel::kDup, kLinkEthernet, "cdc:8192", 2, 60},
      {60'000, PayloadModel::kNr, kLinkEthernet, "cdc:2048", 1, 5},
      {75'000, PayloadModel::kRe, kLinkEthernet, "fixed:4096", 2, 60},
      {100'000, PayloadModel::kDup, kLinkRaw, "cdc:4096", 1, 60},
      {120'000, PayloadModel::kNr, kLinkEthernet, "none", 2, 30},
      {150'000, PayloadModel::kRe, kLinkEthernet, "cdc:4096", 1, 60},
      {200'000, PayloadModel::kDup, kLinkEthernet, "cdc:4096", 2, 60},
      {250'000, PayloadModel::kNr, kLinkRaw, "cdc:16384", 1, 120},
      {300'000, PayloadModel::kRe, kLinkEthernet, "cdc:4096", 1, 60},
      {12'000, PayloadModel::kNr, kLinkEthernet, "fixed:512", 1, 1},
      {25'000, PayloadModel::kDup, kLinkRaw, "none", 3, 20},
      {35'000, PayloadModel::kRe, kLinkEthernet, "cdc:1024", 1, 60},
      {80'000, PayloadModel::kDup, kLinkEthernet, "fixed:2048", 1, 60},
      {18'000, PayloadModel::kNr, kLinkEthernet, "cdc:4096", 2, 600},
      {1'000'000, PayloadModel::kNr, kLinkEthernet, "cdc:4096", 1, 60},
  };
  uint64_t total = 0, diffs = 0, traces = 0;
  std::map<std::string, uint64_t> classes;
  std::string problem;
  for (size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    TempDir d;
    TraceSpec s;
    s.seed = 1000 + i;
    s.duration = 0;
    s.max_packets = c.packets;
    s.payload = c.model;
    if (c.model == PayloadModel::kDup) {
      s.dup_fraction = 0.3;
      s.dup_gap = 20;
    }
    s.link_type = c.link;
    const std::string in = d.sub("in.pcap"), out = d.sub("out.pcap");
    {
      std::ofstream f(in, std::ios::binary);
      generate_trace(s, f);
    }
    PipelineConfig cfg = fvtest::pipeline_for(d, c.epoch, c.workers);
    cfg.archive.chunking = ChunkingConfig::parse(c.chunking);
    cfg.archive.dedup_window_seconds = i % 3 == 0 ? 0 : 3600;
    record_file(in, cfg);
    {
      auto a = Archive::open(cfg.archive.fast_dir);
      std::ofstream f(out, std::ios::binary);
      QueryResult r = QueryEngine(*a).execute({}, &f);
      if (!r.errors.empty() && problem.empty()) problem = "trace " + std::to_string(i) + ": " + r.errors[0].message;
    }
    // Streamed packet-by-packet comparison, then whole-file bytes.
    std::ifstream fa(in, std::ios::binary), fb(out, std::ios::binary);
    PcapReader ra(fa), rb(fb);
    uint64_t n = 0;
    for (;;) {
      auto pa = ra.next();
      auto pb = rb.next();
      if (!pa && !pb) break;
      if (!pa || !pb || !(*pa == *pb)) {
        ++diffs;
        if (problem.empty()) problem = "trace " + std::to_string(i) + " differs at packet " + std::to_string(n);
        break;
      }
      auto v = fvtest::raw_view(*pa, c.link);
      classes[!v.ipv4 ? "non_ip" : v.proto == 6 ? "tcp" : v.proto == 17 ? "udp" : "other"]++;
      ++n;
    }
    if (n != c.packets && problem.empty()) problem = "trace " + std::to_string(i) + " has " + std::to_string(n) + " packets";
    if (std::filesystem::file_size(in) != std::filesystem::file_size(out)) ++diffs;
    total += n;
    ++traces;
  }
  const bool mixed = classes["tcp"] && classes["udp"] && classes["other"] && classes["non_ip"];
  Outcome o;
  o.pass = diffs == 0 && problem.empty() && traces >= 20 && mixed;
  o.detail = fmt("%llu traces, %llu packets (tcp %llu, udp %llu, other %llu, non-ip %llu), %llu differing traces",
                 (unsigned long long)traces, (unsigned long long)total, (unsigned long long)classes["tcp"],
                 (unsigned long long)classes["udp"], (unsigned long long)classes["other"],
                 (unsigned long long)classes["non_ip"], (unsigned long long)diffs);
  if (!problem.empty()) o.detail += "; " + problem;
  return o;
}

struct QueryCorpus {
  TempDir dir;
  std::vector<Packet> trace;
  std::vector<fvtest::OFlow> flows;
  std::unique_ptr<Archive> archive;
  double epoch = 20;
  OracleRun run;
};

QueryCorpus& query_corpus() {
  static std::unique_ptr<QueryCorpus> c;
  if (!c) {
    c = std::make_unique<QueryCorpus>();
    QueryCorpus& q = *c;
    TraceSpec s;
    s.seed = 2024;
    s.duration = 150;
    s.conn_rate = 30;
    s.start = 5000;
    s.payload = PayloadModel::kRe;
    q.trace = load(s);
    auto cfg = fvtest::pipeline_for(q.dir, q.epoch, 2);
    fvtest::record_all(cfg, q.trace);
    q.flows = fvtest::regroup(q.trace, kLinkEthernet, cfg.archive.mfd, cfg.archive.idle_timeout, q.epoch);
    q.archive = Archive::open(cfg.archive.fast_dir);
    q.run = oracle_suite(*q.archive, q.trace, kLinkEthernet, q.flows, q.epoch, 1000, 77);
  }
  return *c;
}

Outcome ac2_oracle() {
  auto& c = query_corpus();
  Outcome o;
  o.pass = c.run.queries == 1000 && c.run.mismatches == 0 && c.run.unavailable == 0;
  o.detail = fmt("%llu queries over %zu packets / %zu flows / %zu epochs, %llu with results, %llu mismatches",
                 (unsigned long long)c.run.queries, c.trace.size(), c.flows.size(), c.archive->epochs().size(),
                 (unsigned long long)c.run.nonempty, (unsigned long long)c.run.mismatches);
  if (!c.run.first_problem.empty()) o.detail += "; " + c.run.first_problem;
  return o;
}

Outcome ac3_index_work() {
  auto& c = query_corpus();
  Outcome o;
  o.pass = c.run.indexed > 0 && c.run.bound_violations == 0 && c.run.nohit_scans == 0 && c.run.nohit_all_indexed > 0;
  o.detail = fmt("%llu indexed queries, %llu bound violations; %llu no-hit all-indexed queries, %llu full scans",
                 (unsigned long long)c.run.indexed, (unsigned long long)c.run.bound_violations,
                 (unsigned long long)c.run.nohit_all_indexed, (unsigned long long)c.run.nohit_scans);
  return o;
}

Outcome ac4_index_size() {
  TempDir d;
  TraceSpec s;
  s.seed = 404;
  s.conn_rate = 600;
  s.duration = 100;
  s.short_data_mean = 1;
  s.long_share = 0.05;
  s.client_hosts = 20000;
  s.server_hosts = 2000;
  auto cfg = fvtest::pipeline_for(d, 60, 1);
  cfg.archive.dedup_window_seconds = 0;
  RecordReport r;
  {
    Recorder rec(cfg);
    TraceGenerator g(s);
    while (auto p = g.next()) rec.ingest(std::move(*p));
    r = rec.finish();
  }
  auto a = Archive::open(cfg.archive.fast_dir);
  uint64_t ip = 0, port = 0, flows = 0;
  for (const auto& e : a->epochs()) {
    ip += e.ip_index_bytes;
    port += e.port_index_bytes;
    flows += e.flows;
  }
  const double per = double(ip + port) / double(flows) / 2;
  Outcome o;
  o.pass = flows >= 100'000 && per <= 12.0;
  o.detail = fmt("%llu flows in %zu epochs: %.2f B/flow/field (ip %.2f, port %.2f), limit 12",
                 (unsigned long long)flows, a->epochs().size(), per, double(ip) / flows, double(port) / flows);
  return o;
}

Outcome ac5_header_compression() {
  TempDir d;
  TraceSpec s;
  s.seed = 505;
  s.duration = 120;
  TraceStats st;
  auto trace = load(s, &st);
  auto cfg = fvtest::pipeline_for(d, 60, 1);
  RecordReport r = fvtest::record_all(cfg, trace);
  // The same header+metadata bytes, in trace order, through deflate alone.
  Bytes raw;
  raw.reserve(r.raw_header_bytes);
  for (const auto& p : trace) {
    ByteWriter w(raw);
    w.u32le(p.ts_sec);
    w.u32le(p.ts_frac);
    w.u32le(p.captured_len);
    w.u32le(p.original_len);
    const size_t h = fvtest::raw_view(p, kLinkEthernet).header_len;
    raw.insert(raw.end(), p.data.begin(), p.data.begin() + h);
  }
  const uint64_t generic = deflate_block(raw).size();
  const double ratio = double(r.header_only_bytes) / double(r.raw_header_bytes);
  Outcome o;
  o.pass = ratio <= 0.35 && r.header_only_bytes < generic && raw.size() == r.raw_header_bytes;
  o.detail = fmt("mean packet %.1f B; raw %llu B -> %llu B (%.1f%%, limit 35%%); deflate alone %llu B (%.1f%%)",
                 st.mean_packet_size(), (unsigned long long)r.raw_header_bytes,
                 (unsigned long long)r.header_only_bytes, 100 * ratio, (unsigned long long)generic,
                 100.0 * generic / r.raw_header_bytes);
  return o;
}

Outcome ac6_dedup_truth() {
  TraceSpec s;
  s.seed = 606;
  s.duration = 400;
  s.conn_rate = 15;
  s.payload = PayloadModel::kDup;
  s.dup_fraction = 0.3;
  s.dup_gap = 100;
  TraceStats truth;
  auto trace = load(s, &truth);
  auto run = [&](const std::vector<Packet>& t, double window) {
    TempDir d;
    auto cfg = fvtest::pipeline_for(d, 60, 1);
    cfg.archive.dedup_window_seconds = window;
    return fvtest::record_all(cfg, t);
  };
  RecordReport wide = run(trace, 200), narrow = run(trace, 50);
  const double err = (double(wide.duplicate_bytes) - truth.dup_payload_bytes) / truth.dup_payload_bytes;
  const double leak = double(narrow.duplicate_bytes) / truth.dup_payload_bytes;

  TraceSpec n;
  n.seed = 607;
  n.duration = 120;
  RecordReport nr = run(load(n), 3600);
  Outcome o;
  o.pass = std::abs(err) <= 0.02 && leak <= 0.001 && nr.dedup_hits == 0 && nr.chunks > 0;
  o.detail = fmt("DUP(0.3,100s) truth %llu B: window 200 s found %llu B (%+.2f%%), window 50 s found %llu B "
                 "(%.3f%%); NR cdc:4096 %llu chunks, %llu hits",
                 (unsigned long long)truth.dup_payload_bytes, (unsigned long long)wide.duplicate_bytes, 100 * err,
                 (unsigned long long)narrow.duplicate_bytes, 100 * leak, (unsigned long long)nr.chunks,
                 (unsigned long long)nr.dedup_hits);
  return o;
}

Outcome ac7_sweep() {
  TraceSpec s;
  s.seed = 707;
  s.duration = 240;
  s.conn_rate = 10;
  s.payload = PayloadModel::kDup;
  s.dup_fraction = 0.25;
  s.dup_gap = 60;
  auto trace = load(s);
  SweepOptions opt;
  opt.configs = {ChunkingConfig::cdc(2048), ChunkingConfig::cdc(4096), ChunkingConfig::cdc(8192),
                 ChunkingConfig::fixed(4096), ChunkingConfig::none()};
  opt.windows = {0, 15, 30, 59, 90, 120, 600};
  SweepReport rep = dedup_window_sweep(trace, opt);
  uint64_t violations = 0;
  const size_t W = opt.windows.size();
  for (size_t c = 0; c < opt.configs.size(); ++c)
    for (size_t w = 1; w < W; ++w) {
      const auto &a = rep.points[c * W + w - 1], &b = rep.points[c * W + w];
      if (b.duplicate_raw_bytes < a.duplicate_raw_bytes || b.duplicate_compressed_bytes < a.duplicate_compressed_bytes ||
          b.redundancy_raw() < a.redundancy_raw() || b.redundancy_compressed() < a.redundancy_compressed())
        ++violations;
    }
  uint64_t zero_window_dups = 0;
  for (size_t c = 0; c < opt.configs.size(); ++c) zero_window_dups += rep.points[c * W].duplicate_raw_bytes;

  // Spot checks against full record runs.
  const std::vector<std::pair<size_t, size_t>> spots = {{1, 2}, {1, 5}, {0, 6}, {3, 4}, {2, 3}};
  uint64_t worst = 0, off = 0;
  for (auto [c, w] : spots) {
    const SweepPoint& p = rep.points[c * W + w];
    TempDir d;
    auto cfg = fvtest::pipeline_for(d, 60, 1);
    cfg.archive.chunking = p.chunking;
    cfg.archive.dedup_window_seconds = p.window_seconds;
    RecordReport r = fvtest::record_all(cfg, trace);
    const uint64_t diff = r.duplicate_bytes > p.duplicate_raw_bytes ? r.duplicate_bytes - p.duplicate_raw_bytes
                                                                    : p.duplicate_raw_bytes - r.duplicate_bytes;
    worst = std::max(worst, diff);
    if (diff > p.chunking.max_size) ++off;
  }
  Outcome o;
  o.pass = violations == 0 && zero_window_dups == 0 && off == 0;
  o.detail = fmt("%zu configs x %zu windows, %llu monotonicity violations; %zu record spot checks, worst "
                 "difference %llu B, %llu beyond one max chunk",
                 opt.configs.size(), W, (unsigned long long)violations, spots.size(), (unsigned long long)worst,
                 (unsigned long long)off);
  return o;
}

// Epoch length that splits the trace into exactly ten epochs from 0.
double ten_epochs(const std::vector<Packet>& t) { return double(t.back().ts() / 10 + 1) / 1e6; }

Outcome ac8_eviction() {
  // Part 1: window within retention, default (horizon) policy.
  TraceSpec s;
  s.seed = 808;
  s.duration = 300;
  s.conn_rate = 8;
  s.payload = PayloadModel::kDup;
  s.dup_fraction = 0.3;
  s.dup_gap = 40;
  auto trace = load(s);
  const double E = ten_epochs(trace);
  TempDir d1;
  auto cfg = fvtest::pipeline_for(d1, E, 1);
  cfg.archive.dedup_window_seconds = 60;
  fvtest::record_all(cfg, trace);
  auto a = Archive::open(cfg.archive.fast_dir);
  const size_t before = a->epochs().size();
  const uint64_t bulk_before = a->usage().bulk_bytes;
  const uint64_t cut = a->epochs()[before / 2].id;
  a->evict_oldest(cut, EvictionPolicy::kHorizon);
  const double retention = (before - before / 2) * E;
  auto flows = fvtest::regroup(trace, kLinkEthernet, cfg.archive.mfd, cfg.archive.idle_timeout, E);
  OracleRun run = oracle_suite(*a, trace, kLinkEthernet, flows, E, 1000, 88);
  const uint64_t bulk_after = a->usage().bulk_bytes;

  // Part 2: window beyond retention; drop segments by write epoch alone.
  s.seed = 809;
  s.dup_gap = 200;
  auto t2 = load(s);
  const double E2 = ten_epochs(t2);
  TempDir d2;
  auto cfg2 = fvtest::pipeline_for(d2, E2, 1);
  cfg2.archive.dedup_window_seconds = 3600;
  fvtest::record_all(cfg2, t2);
  auto b = Archive::open(cfg2.archive.fast_dir);
  const size_t before2 = b->epochs().size();
  b->evict_oldest(b->epochs()[before2 / 2].id, EvictionPolicy::kEpochOnly);
  auto flows2 = fvtest::regroup(t2, kLinkEthernet, cfg2.archive.mfd, cfg2.archive.idle_timeout, E2);
  QueryResult full = QueryEngine(*b).execute({});
  // Every flow not reported unavailable must come back exactly.
  std::set<std::pair<FlowKey, Micros>> failed;
  for (const auto& e : full.errors) {
    auto blk = CompressedHeaderBlock::parse(b->read_header_block(e.location));
    failed.insert({blk.key, blk.first_ts});
  }
  std::vector<fvtest::OFlow> intact;
  for (const auto& f : flows2) {
    FlowKey k{f.key.src, f.key.dst, f.key.proto, f.key.sport, f.key.dport};
    if (!failed.count({k, f.first})) intact.push_back(f);
  }
  auto want = fvtest::expected_result(t2, kLinkEthernet, intact, epoch_ids(*b), E2, Query{});
  auto got = read_pcap(full.pcap);
  const bool exact = got.packets == want.packets;
  Query hq;
  hq.retrieval = Retrieval::kHeaders;
  const std::string headers_diff =
      fvtest::compare(fvtest::expected_result(t2, kLinkEthernet, flows2, epoch_ids(*b), E2, hq),
                      QueryEngine(*b).execute(hq), hq.retrieval);

  Outcome o;
  o.pass = before == 10 && run.mismatches == 0 && run.unavailable == 0 && bulk_after < bulk_before &&
           before2 == 10 && !full.errors.empty() && failed.size() == full.errors.size() && exact &&
           headers_diff.empty();
  o.detail = fmt("window 60 s <= retention %.0f s: evicted %zu of %zu epochs, bulk %llu -> %llu B, %llu queries, "
                 "%llu mismatches, %llu unavailable; window 3600 s epoch-only: %zu unavailable flows reported, "
                 "remaining %llu packets %s, headers-only %s",
                 retention, before / 2, before, (unsigned long long)bulk_before, (unsigned long long)bulk_after,
                 (unsigned long long)run.queries, (unsigned long long)run.mismatches,
                 (unsigned long long)run.unavailable, full.errors.size(), (unsigned long long)got.packets.size(),
                 exact ? "exact" : "WRONG", headers_diff.empty() ? "exact" : headers_diff.c_str());
  if (!run.first_problem.empty()) o.detail += "; " + run.first_problem;
  return o;
}

std::vector<OnlineQuery> online_mix(uint64_t n) {
  std::vector<OnlineQuery> qs;
  auto add = [&](Query q, double at) { qs.push_back({q, uint64_t(at * n)}); };
  Query all;
  all.retrieval = Retrieval::kHeaders;
  add(all, 0.2);
  Query web;
  web.criteria.dst_port = 80;
  add(web, 0.3);
  Query udp;
  udp.criteria.protocol = 17;
  udp.range = TimeRange::last_seconds(60);
  add(udp, 0.45);
  Query ex;
  ex.criteria.any_port = 53;
  ex.retrieval = Retrieval::kExistence;
  add(ex, 0.6);
  Query host;
  host.criteria.any_ip = parse_ipv4("93.184.0.1");
  add(host, 0.75);
  Query full;
  full.criteria.protocol = 6;
  add(full, 0.9);
  add(all, 1.5);
  return qs;
}

Outcome ac9_online() {
  TraceSpec s;
  s.seed = 909;
  s.duration = 120;
  s.conn_rate = 40;
  auto trace = load(s);
  // Measured maximum: the same pipeline, unpaced, no queries.
  double max_pps = 0;
  {
    TempDir d;
    auto cfg = fvtest::pipeline_for(d, 15, 0);
    RecordReport r = fvtest::record_all(cfg, trace);
    max_pps = r.packets_per_second();
  }
  const auto mix = online_mix(trace.size());
  struct Run {
    OnlineReport rep;
    uint64_t mismatches = 0;
    uint64_t faults = 0;
  };
  auto online = [&](bool faulty) {
    Run out;
    TempDir d;
    auto cfg = fvtest::pipeline_for(d, 15, 0);
    OnlineConfig oc;
    oc.rate_pps = max_pps / 2;
    size_t i = 0;
    auto source = [&]() -> std::optional<Packet> {
      if (i >= trace.size()) return std::nullopt;
      return trace[i++];
    };
    UnitHook hook;
    if (faulty)
      hook = [&](QueryTask& t) {
        // Pause: checkpoint; the task runs on and its work is lost; resume
        // from the checkpoint.
        QueryTask checkpoint = t;
        t.step();
        t = checkpoint;
        ++out.faults;
      };
    out.rep = run_online(cfg, oc, source, mix, hook);
    auto a = Archive::open(cfg.archive.fast_dir);
    for (size_t q = 0; q < out.rep.queries.size(); ++q) {
      QueryTask task(*a, mix[q].query, out.rep.queries[q].snapshot);
      while (!task.step()) {
      }
      QueryResult off = task.finish();
      const auto& on = out.rep.queries[q].result;
      if (on.exists != off.exists || on.flow_count != off.flow_count || on.locations != off.locations ||
          on.pcap != off.pcap)
        ++out.mismatches;
    }
    return out;
  };
  Run plain = online(false), faulty = online(true);
  bool partial = false;
  for (const auto& q : plain.rep.queries) partial |= q.snapshot.size() > 0 && q.issued_at_packet < trace.size();
  Outcome o;
  o.pass = plain.rep.dropped == 0 && faulty.rep.dropped == 0 && plain.rep.queries.size() == mix.size() &&
           faulty.rep.queries.size() == mix.size() && plain.mismatches == 0 && faulty.mismatches == 0 &&
           faulty.faults == faulty.rep.query_units && partial;
  o.detail = fmt("max ingest %.0f pkt/s, paced at %.0f: %llu packets, %llu dropped, %zu queries in %llu units, "
                 "%llu mismatches vs offline; checkpoint rollback at all %llu units: %llu dropped, %llu mismatches",
                 max_pps, max_pps / 2, (unsigned long long)plain.rep.offered, (unsigned long long)plain.rep.dropped,
                 plain.rep.queries.size(), (unsigned long long)plain.rep.query_units,
                 (unsigned long long)plain.mismatches, (unsigned long long)faulty.faults,
                 (unsigned long long)faulty.rep.dropped, (unsigned long long)faulty.mismatches);
  return o;
}

Outcome ac10_cost() {
  const TierUsage u{5'130'000'000 + 1'590'000'000 + 141'000'000, 316'200'000'000};
  const double c = storage_cost(u, CostModel{});
  Outcome o;
  o.pass = std::abs(round_cents(c) - 19.84) < 1e-9;
  o.detail = fmt("6.861 GB fast + 316.2 GB bulk -> $%.5f, rounds to $%.2f (expected $19.84)", c, round_cents(c));
  return o;
}

Outcome ac11_crash() {
  TraceSpec s;
  s.seed = 1111;
  s.duration = 60;
  s.conn_rate = 10;
  s.payload = PayloadModel::kDup;
  s.dup_fraction = 0.2;
  s.dup_gap = 15;
  auto trace = load(s);
  const double E = 5;
  auto flows = fvtest::regroup(trace, kLinkEthernet, 300, 15, E);

  TempDir ref_dir;
  auto ref_cfg = fvtest::pipeline_for(ref_dir, E, 1);
  ref_cfg.archive.segment_max_bytes = 1 << 20;
  const uint64_t ops0 = io_ops_performed();
  fvtest::record_all(ref_cfg, trace);
  const uint64_t total_ops = io_ops_performed() - ops0;
  auto ref = Archive::open(ref_cfg.archive.fast_dir);
  std::map<uint64_t, std::vector<Bytes>> ref_blocks;
  for (const auto& e : ref->epochs())
    ref->scan_epoch(e.id, [&](FlowLocation, ByteView b) { ref_blocks[e.id].emplace_back(b.begin(), b.end()); });

  std::mt19937_64 rng(11);
  uint64_t crashed = 0, bad = 0, sealed_total = 0, queries = 0;
  std::string problem;
  for (int i = 0; i < 100; ++i) {
    const uint64_t at = 1 + rng() % total_ops;
    const bool torn = rng() % 2;
    TempDir d;
    auto cfg = fvtest::pipeline_for(d, E, 1);
    cfg.archive.segment_max_bytes = 1 << 20;
    std::cout.flush();
    pid_t pid = fork();
    if (pid == 0) {
      set_crash_after_io_ops(at, torn);
      fvtest::record_all(cfg, trace);
      _exit(0);
    }
    int status = 0;
    waitpid(pid, &status, 0);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code == 77) ++crashed;
    auto note = [&](const std::string& m) {
      ++bad;
      if (problem.empty()) problem = "point " + std::to_string(at) + ": " + m;
    };
    if (code != 0 && code != 77) {
      note("child exit " + std::to_string(code));
      continue;
    }
    std::unique_ptr<Archive> a;
    try {
      a = Archive::open(cfg.archive.fast_dir);
    } catch (const UsageError&) {
      // Died before the empty archive's manifest was published.
      if (code == 0) note("finished run has no manifest");
      continue;
    } catch (const std::exception& e) {
      note(std::string("reopen failed: ") + e.what());
      continue;
    }
    try {
      const auto eps = a->epochs();
      sealed_total += eps.size();
      if (code == 0 && eps.size() != ref_blocks.size()) note("finished run lost epochs");
      for (const auto& e : eps) {
        std::vector<Bytes> blocks;
        a->scan_epoch(e.id, [&](FlowLocation, ByteView b) { blocks.emplace_back(b.begin(), b.end()); });
        if (!ref_blocks.count(e.id) || blocks != ref_blocks[e.id]) note("epoch " + std::to_string(e.id) + " differs");
      }
      if (!eps.empty()) {
        OracleRun run = oracle_suite(*a, trace, kLinkEthernet, flows, E, 10, 1000 + i);
        queries += run.queries;
        if (run.mismatches || run.unavailable) note("oracle: " + run.first_problem);
        // A whole-archive read touches every chunk of every sealed epoch.
        auto want = fvtest::expected_result(trace, kLinkEthernet, flows, epoch_ids(*a), E, Query{});
        QueryResult all = QueryEngine(*a).execute({});
        ++queries;
        if (!fvtest::compare(want, all, Retrieval::kFull).empty()) note("full read differs");
      }
    } catch (const std::exception& e) {
      note(std::string("read failed: ") + e.what());
    }
  }
  Outcome o;
  o.pass = bad == 0 && crashed >= 90;
  o.detail = fmt("100 kill points over %llu I/O ops (%llu crashed mid-run), %llu sealed epochs reopened, "
                 "%llu oracle queries, %llu failures",
                 (unsigned long long)total_ops, (unsigned long long)crashed, (unsigned long long)sealed_total,
                 (unsigned long long)queries, (unsigned long long)bad);
  if (!problem.empty()) o.detail += "; " + problem;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> all = {
      {"full-fidelity round trip", ac1_round_trip},
      {"query oracle equivalence", ac2_oracle},
      {"index work bound", ac3_index_work},
      {"index size", ac4_index_size},
      {"header compression", ac5_header_compression},
      {"dedup ground truth", ac6_dedup_truth},
      {"window sweep", ac7_sweep},
      {"eviction safety", ac8_eviction},
      {"online mode", ac9_online},
      {"cost model", ac10_cost},
      {"crash consistency", ac11_crash},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < all.size(); ++i) {
    const int n = int(i) + 1;
    if (!pick.empty() && !pick.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "AC" << n << (o.pass ? " PASS " : " FAIL ") << all[i].first << ": " << o.detail << " ["
              << fmt("%.1f s", secs) << "]" << std::endl;
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
