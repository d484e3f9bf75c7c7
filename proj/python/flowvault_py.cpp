#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <optional>
#include <string>

#include "flowvault/error.hpp"
#include "flowvault/query.hpp"
#include "flowvault/recorder.hpp"
#include "flowvault/workload.hpp"

namespace py = pybind11;
using namespace flowvault;

namespace {

std::optional<uint32_t> ip_arg(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  return parse_ipv4(*s);
}

std::optional<uint16_t> port_arg(std::optional<int> p) {
  if (!p) return std::nullopt;
  if (*p < 0 || *p > 65535) throw UsageError("port out of range: " + std::to_string(*p));
  return static_cast<uint16_t>(*p);
}

std::optional<uint8_t> proto_arg(const py::object& o) {
  if (o.is_none()) return std::nullopt;
  if (py::isinstance<py::str>(o)) {
    auto s = o.cast<std::string>();
    if (s == "tcp") return 6;
    if (s == "udp") return 17;
    if (s == "icmp") return 1;
    throw UsageError("unknown protocol '" + s + "'");
  }
  int v = o.cast<int>();
  if (v < 0 || v > 255) throw UsageError("protocol out of range: " + std::to_string(v));
  return static_cast<uint8_t>(v);
}

py::dict totals_dict(const ArchiveTotals& t) {
  py::dict d;
  d["packets"] = t.packets;
  d["flows"] = t.flows;
  d["input_bytes"] = t.input_bytes;
  d["payload_bytes"] = t.payload_bytes;
  d["chunks"] = t.chunks;
  d["dedup_hits"] = t.dedup_hits;
  d["duplicate_bytes"] = t.duplicate_bytes;
  d["stored_chunk_bytes"] = t.stored_chunk_bytes;
  d["header_block_bytes"] = t.header_block_bytes;
  d["index_bytes"] = t.index_bytes;
  d["epochs_evicted"] = t.epochs_evicted;
  d["segments_evicted"] = t.segments_evicted;
  return d;
}

std::unique_ptr<Archive> open_archive(const std::string& dir, const std::optional<std::string>& bulk) {
  return Archive::open(dir, bulk);
}

py::dict generate(const std::string& path, uint64_t seed, double duration, double conn_rate,
                  const std::string& payload, const std::string& link, double start, uint64_t max_packets) {
  TraceSpec s;
  s.seed = seed;
  s.duration = duration;
  s.conn_rate = conn_rate;
  s.start = start;
  s.max_packets = max_packets;
  TraceSpec::parse_payload(payload, s);
  if (link == "raw") s.link_type = kLinkRaw;
  else if (link != "ethernet") throw UsageError("link must be ethernet or raw");
  s.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  TraceStats st;
  {
    py::gil_scoped_release nogil;
    st = generate_trace(s, out);
  }
  py::dict d;
  d["packets"] = st.packets;
  d["connections"] = st.connections;
  d["bytes"] = st.bytes;
  d["payload_bytes"] = st.payload_bytes;
  d["dup_payload_bytes"] = st.dup_payload_bytes;
  d["mean_packet_size"] = st.mean_packet_size();
  return d;
}

py::dict record(const std::string& pcap, const std::string& archive, const std::optional<std::string>& bulk_dir,
                double epoch_seconds, const std::string& chunking, double dedup_window, unsigned workers) {
  PipelineConfig cfg;
  cfg.archive.fast_dir = archive;
  cfg.archive.bulk_dir = bulk_dir.value_or(archive);
  cfg.archive.epoch_seconds = epoch_seconds;
  cfg.archive.chunking = ChunkingConfig::parse(chunking);
  cfg.archive.dedup_window_seconds = dedup_window;
  cfg.workers = workers;
  RecordReport r;
  {
    py::gil_scoped_release nogil;
    r = record_file(pcap, cfg);
  }
  py::dict d = totals_dict(r.totals());
  d["epochs"] = r.epochs;
  d["header_only_bytes"] = r.header_only_bytes;
  d["raw_header_bytes"] = r.raw_header_bytes;
  d["late_flows"] = r.late_flows;
  d["wall_seconds"] = r.wall_seconds;
  return d;
}

py::dict query(const std::string& archive, const std::optional<std::string>& ip,
               const std::optional<std::string>& src_ip, const std::optional<std::string>& dst_ip,
               std::optional<int> port, std::optional<int> src_port, std::optional<int> dst_port,
               const py::object& proto, const std::string& range, const std::string& retrieve,
               const std::optional<std::string>& bulk_dir) {
  Query q;
  q.range = TimeRange::parse(range);
  q.criteria.any_ip = ip_arg(ip);
  q.criteria.src_ip = ip_arg(src_ip);
  q.criteria.dst_ip = ip_arg(dst_ip);
  q.criteria.any_port = port_arg(port);
  q.criteria.src_port = port_arg(src_port);
  q.criteria.dst_port = port_arg(dst_port);
  q.criteria.protocol = proto_arg(proto);
  if (retrieve == "exists") q.retrieval = Retrieval::kExistence;
  else if (retrieve == "headers") q.retrieval = Retrieval::kHeaders;
  else if (retrieve != "full") throw UsageError("retrieve must be exists, headers or full");

  auto a = open_archive(archive, bulk_dir);
  QueryResult r;
  {
    py::gil_scoped_release nogil;
    r = QueryEngine(*a).execute(q);
  }
  py::dict d;
  d["exists"] = r.exists;
  d["matched_flows"] = r.flow_count;
  d["packets"] = r.packet_count;
  d["pcap"] = py::bytes(reinterpret_cast<const char*>(r.pcap.data()), r.pcap.size());
  py::list errs;
  for (const auto& e : r.errors) errs.append(py::make_tuple(e.location.offset, e.message));
  d["errors"] = errs;
  py::dict st;
  st["epochs_touched"] = r.stats.epochs_touched;
  st["candidates"] = r.stats.candidates;
  st["false_positives"] = r.stats.false_positives;
  st["blocks_decompressed"] = r.stats.blocks_decompressed;
  st["full_scans"] = r.stats.full_scans;
  st["chunks_read"] = r.stats.chunks_read;
  d["stats"] = st;
  return d;
}

py::dict stats(const std::string& archive, const std::optional<std::string>& bulk_dir) {
  auto a = open_archive(archive, bulk_dir);
  py::dict d = totals_dict(a->totals());
  py::list eps;
  for (const auto& e : a->epochs()) {
    py::dict x;
    x["id"] = e.id;
    x["flows"] = e.flows;
    x["packets"] = e.packets;
    x["first_ts"] = e.first_ts;
    x["last_ts"] = e.last_ts;
    eps.append(x);
  }
  d["epochs"] = eps;
  d["segments"] = a->segments().size();
  TierUsage u = a->usage();
  d["fast_bytes"] = u.fast_bytes;
  d["bulk_bytes"] = u.bulk_bytes;
  d["epoch_seconds"] = a->config().epoch_seconds;
  d["chunking"] = a->config().chunking.str();
  return d;
}

py::dict evict(const std::string& archive, uint64_t retain_epochs, const std::string& policy,
               const std::optional<std::string>& bulk_dir) {
  EvictionPolicy p;
  if (policy == "horizon") p = EvictionPolicy::kHorizon;
  else if (policy == "epoch-only") p = EvictionPolicy::kEpochOnly;
  else throw UsageError("policy must be horizon or epoch-only");
  auto a = open_archive(archive, bulk_dir);
  auto eps = a->epochs();
  uint64_t until = 0;
  if (retain_epochs == 0 && !eps.empty()) until = eps.back().id + 1;
  else if (eps.size() > retain_epochs) until = eps[eps.size() - retain_epochs].id;
  auto r = a->evict_oldest(until, p);
  py::dict d;
  d["epochs_removed"] = r.epochs_removed;
  d["segments_removed"] = r.segments_removed;
  d["fast_bytes_freed"] = r.fast_bytes_freed;
  d["bulk_bytes_freed"] = r.bulk_bytes_freed;
  d["epochs_retained"] = a->epochs().size();
  return d;
}

double cost(uint64_t fast_bytes, uint64_t bulk_bytes, double fast_price, double bulk_price) {
  CostModel m{fast_price, bulk_price};
  m.validate();
  return storage_cost({fast_bytes, bulk_bytes}, m);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "flowvault traffic archive";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
  py::register_exception<StorageError>(m, "StorageError", base.ptr());
  py::register_exception<DataUnavailable>(m, "DataUnavailable", base.ptr());

  m.def("generate_trace", &generate, py::arg("path"), py::kw_only(), py::arg("seed") = 1,
        py::arg("duration") = 60.0, py::arg("conn_rate") = 50.0, py::arg("payload") = "nr",
        py::arg("link") = "ethernet", py::arg("start") = 0.0, py::arg("max_packets") = 0,
        "Write a synthetic pcap and return its stats.");
  m.def("record", &record, py::arg("pcap"), py::arg("archive"), py::kw_only(),
        py::arg("bulk_dir") = py::none(), py::arg("epoch_seconds") = 60.0, py::arg("chunking") = "cdc:4096",
        py::arg("dedup_window") = 3600.0, py::arg("workers") = 0u);
  m.def("query", &query, py::arg("archive"), py::kw_only(), py::arg("ip") = py::none(),
        py::arg("src_ip") = py::none(), py::arg("dst_ip") = py::none(), py::arg("port") = py::none(),
        py::arg("src_port") = py::none(), py::arg("dst_port") = py::none(), py::arg("proto") = py::none(),
        py::arg("range") = "entire", py::arg("retrieve") = "full", py::arg("bulk_dir") = py::none());
  m.def("stats", &stats, py::arg("archive"), py::kw_only(), py::arg("bulk_dir") = py::none());
  m.def("evict", &evict, py::arg("archive"), py::kw_only(), py::arg("retain_epochs"),
        py::arg("policy") = "horizon", py::arg("bulk_dir") = py::none());
  m.def("storage_cost", &cost, py::arg("fast_bytes"), py::arg("bulk_bytes"), py::kw_only(),
        py::arg("fast_price") = CostModel{}.fast_price, py::arg("bulk_price") = CostModel{}.bulk_price,
        "Dollars for the given tier bytes; prices are per 1e9 bytes.");
  m.def("round_cents", &round_cents);
}
