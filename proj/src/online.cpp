#include "flowvault/online.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

namespace flowvault {

OnlineReport run_online(const PipelineConfig& config, const OnlineConfig& online,
                        const std::function<std::optional<Packet>()>& source,
                        std::vector<OnlineQuery> queries, const UnitHook& hook) {
  if (online.ring_capacity == 0) throw UsageError("online: ring capacity must be positive");
  if (!(online.rate_pps >= 0)) throw UsageError("online: rate must be non-negative");
  std::stable_sort(queries.begin(), queries.end(),
                   [](const OnlineQuery& a, const OnlineQuery& b) { return a.after_packets < b.after_packets; });

  Recorder rec(config);
  OnlineReport report;

  std::mutex mu;
  std::condition_variable cv;
  std::deque<Packet> ring;
  bool source_done = false;
  std::atomic<bool> stop{false};
  std::exception_ptr capture_error;

  std::thread capture([&] {
    try {
      using Clock = std::chrono::steady_clock;
      const auto t0 = Clock::now();
      uint64_t n = 0;
      while (!stop) {
        auto p = source();
        if (!p) break;
        if (online.rate_pps > 0) {
          const auto due = t0 + std::chrono::duration_cast<Clock::duration>(
                                    std::chrono::duration<double>(n / online.rate_pps));
          if (Clock::now() < due) std::this_thread::sleep_until(due);
        }
        ++n;
        {
          std::lock_guard lk(mu);
          ++report.offered;
          if (ring.size() >= online.ring_capacity) {
            ++report.dropped;
            continue;
          }
          ring.push_back(std::move(*p));
          report.max_ring_fill = std::max<uint64_t>(report.max_ring_fill, ring.size());
        }
        cv.notify_one();
      }
    } catch (...) {
      std::lock_guard lk(mu);
      capture_error = std::current_exception();
    }
    {
      std::lock_guard lk(mu);
      source_done = true;
    }
    cv.notify_one();
  });

  size_t next_query = 0;
  uint64_t ingested = 0;
  std::optional<QueryTask> active;
  OnlineQueryOutcome current;

  auto start_due = [&](bool all) {
    if (active || next_query >= queries.size()) return;
    if (!all && queries[next_query].after_packets > ingested) return;
    active.emplace(rec.archive(), queries[next_query].query);
    current = {};
    current.snapshot = active->snapshot();
    current.issued_at_packet = ingested;
    ++next_query;
  };

  try {
    for (;;) {
      std::optional<Packet> p;
      size_t fill = 0;
      bool drained = false;
      {
        std::unique_lock lk(mu);
        if (ring.empty() && !source_done && !active)
          cv.wait(lk, [&] { return !ring.empty() || source_done; });
        if (!ring.empty()) {
          p = std::move(ring.front());
          ring.pop_front();
        }
        fill = ring.size();
        drained = source_done && ring.empty() && !p;
        if (capture_error) std::rethrow_exception(capture_error);
      }
      if (p) {
        rec.ingest(std::move(*p));
        ++ingested;
      }
      start_due(drained);
      if (active && fill < online.low_water) {
        if (hook) hook(*active);
        active->step();
        ++current.units;
        ++report.query_units;
        if (active->done()) {
          current.finished_at_packet = ingested;
          current.result = active->finish();
          report.queries.push_back(std::move(current));
          active.reset();
          start_due(drained);
        }
      }
      if (drained && !active && next_query >= queries.size()) break;
    }
  } catch (...) {
    stop = true;
    capture.join();
    throw;
  }
  capture.join();
  report.record = rec.finish();
  return report;
}

}  // namespace flowvault
