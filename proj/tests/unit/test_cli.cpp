#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "flowvault/cli.hpp"
#include "flowvault/pcap.hpp"
#include "flowvault/workload.hpp"
#include "support/tempdir.hpp"

using namespace flowvault;
using fvtest::TempDir;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  int code = run_cli(args, o, e);
  return {code, o.str(), e.str()};
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + ":", 0) == 0) {
      auto v = line.substr(key.size() + 1);
      v.erase(0, v.find_first_not_of(' '));
      return v;
    }
  return "";
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("cli: gen, record, query, stats, evict") {
  TempDir d;
  const std::string pcap = d.sub("t.pcap"), arch = d.sub("arch");
  Run g = cli({"gen", "--out", pcap, "--duration", "40", "--rate", "10", "--seed", "3"});
  REQUIRE(g.code == 0);
  const std::string packets = value_of(g.out, "packets");
  REQUIRE(!packets.empty());

  Run r = cli({"record", "--in", pcap, "--fast-dir", arch, "--epoch", "10"});
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "packets") == packets);
  CHECK(cli({"record", "--in", pcap, "--fast-dir", arch}).code == 1);  // archive exists

  Run s = cli({"stats", "--archive", arch});
  REQUIRE(s.code == 0);
  CHECK(value_of(s.out, "packets") == packets);
  CHECK(value_of(s.out, "flows") == value_of(r.out, "flows"));
  CHECK(value_of(s.out, "chunking") == "cdc:4096");

  // Full retrieval reproduces the generated file byte for byte.
  const std::string back = d.sub("back.pcap");
  Run q = cli({"query", "--archive", arch, "--out", back});
  REQUIRE(q.code == 0);
  CHECK(slurp(back) == slurp(pcap));
  CHECK(value_of(q.out, "packets") == packets);

  Run ex = cli({"query", "--archive", arch, "--retrieve", "exists", "--ip", "203.0.113.9"});
  CHECK(ex.code == 0);
  CHECK(ex.out.rfind("false\n", 0) == 0);
  Run ex2 = cli({"query", "--archive", arch, "--retrieve", "exists", "--proto", "tcp"});
  CHECK(ex2.out.rfind("true\n", 0) == 0);

  // pcap on stdout moves the report to stderr.
  Run h = cli({"query", "--archive", arch, "--retrieve", "headers", "--port", "53"});
  CHECK(h.code == 0);
  CHECK(h.out.substr(0, 4) == std::string("\xd4\xc3\xb2\xa1", 4));
  CHECK(!value_of(h.err, "matched_flows").empty());

  Run c1 = cli({"stats", "--archive", arch, "--format", "csv"});
  Run c2 = cli({"stats", "--archive", arch, "--format", "csv"});
  CHECK(c1.out == c2.out);
  CHECK(c1.out.find("packets") != std::string::npos);

  Run ev = cli({"evict", "--archive", arch, "--retain-epochs", "2"});
  CHECK(ev.code == 0);
  CHECK(value_of(ev.out, "epochs_retained") == "2");
  Run after = cli({"query", "--archive", arch, "--retrieve", "exists"});
  CHECK(after.code == 0);
}

TEST_CASE("cli: exit codes for bad input") {
  TempDir d;
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"query", "--archive", d.sub("none"), "--src-port", "70000"}).code == 1);
  CHECK(cli({"query", "--archive", d.sub("none")}).code == 1);
  CHECK(cli({"query", "--archive", d.sub("none"), "--range", "9:1"}).code == 1);
  CHECK(cli({"gen", "--out", d.sub("x.pcap"), "--payload", "dup:2:1"}).code == 1);
  CHECK(cli({"record", "--in", d.sub("missing.pcap"), "--fast-dir", d.sub("a")}).code != 0);
  CHECK(cli({"--help"}).code == 0);

  // A non-pcap input is a data error.
  { std::ofstream(d.sub("junk.pcap")) << "not a pcap at all, clearly"; }
  CHECK(cli({"record", "--in", d.sub("junk.pcap"), "--fast-dir", d.sub("b")}).code == 2);
}

TEST_CASE("cli: the archive directory can come from the environment") {
  TempDir d;
  const std::string pcap = d.sub("t.pcap"), arch = d.sub("arch");
  REQUIRE(cli({"gen", "--out", pcap, "--duration", "5"}).code == 0);
  REQUIRE(cli({"record", "--in", pcap, "--fast-dir", arch}).code == 0);
  setenv(kArchiveEnv, arch.c_str(), 1);
  Run s = cli({"stats"});
  unsetenv(kArchiveEnv);
  CHECK(s.code == 0);
  CHECK(!value_of(s.out, "packets").empty());
}

TEST_CASE("cli: sweep and online query") {
  TempDir d;
  const std::string pcap = d.sub("t.pcap");
  REQUIRE(cli({"gen", "--out", pcap, "--duration", "30", "--payload", "dup:0.3:10"}).code == 0);
  Run sw = cli({"sweep", "--in", pcap, "--windows", "0,5,60", "--format", "csv"});
  REQUIRE(sw.code == 0);
  CHECK(std::count(sw.out.begin(), sw.out.end(), '\n') == 4);
  CHECK(cli({"sweep", "--in", pcap, "--windows", "x"}).code == 1);

  Run on = cli({"query", "--mode", "online", "--in", pcap, "--archive", d.sub("live"), "--after", "1000",
                "--retrieve", "exists", "--proto", "udp"});
  CHECK(on.code == 0);
  CHECK(value_of(on.out, "dropped_packets") == "0");
  CHECK(cli({"query", "--mode", "online", "--archive", d.sub("live2")}).code == 1);
}
