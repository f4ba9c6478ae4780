#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "colosim/log.hpp"
#include "colosim/time.hpp"
#include "colosim/trace.hpp"

namespace colosim {

// Percentiles are nearest-rank over the sorted sample.
struct DistStats {
  std::int64_t count = 0;
  double mean = 0, min = 0, max = 0, p50 = 0, p95 = 0, p99 = 0;
};
DistStats dist_stats(std::vector<double> values);

struct ReclaimOpStat {
  std::int64_t op = 0;
  std::string purpose;  // shortfall | growth | uvm
  SimTime latency_us = 0;
  int handles = 0;
};

// Everything here is recomputed from the event log alone; serializing a report
// twice from the same log yields identical bytes.
struct RunReport {
  std::string scenario, preset;
  std::uint64_t seed = 0;
  int gpus = 1;
  SimTime horizon_us = 0;
  std::uint64_t online_fingerprint = 0, offline_fingerprint = 0;

  std::int64_t online_requests = 0;
  std::int64_t online_completed = 0;
  std::int64_t online_with_token = 0;
  DistStats ttft_us;  // requests with >= 1 emitted token
  DistStats tpot_us;  // requests with >= 2: (last - first) / (n - 1)
  std::map<std::int64_t, double> ttft_by_req;
  std::map<std::int64_t, double> tpot_by_req;
  std::map<std::int64_t, Interval> online_lifetime;  // arrival .. completion/horizon

  std::int64_t offline_requests = 0;
  std::int64_t offline_completed = 0;
  std::int64_t offline_tokens = 0;  // killed work excluded
  double offline_tokens_per_s = 0;
  std::int64_t evictions = 0;
  std::int64_t kills = 0;
  std::int64_t faults = 0;

  std::int64_t pressure_events = 0;
  std::int64_t reclaim_ops = 0;
  DistStats reclaim_latency_us;
  std::vector<ReclaimOpStat> reclaim_detail;
  std::int64_t disables_issued = 0;
  std::int64_t enables_issued = 0;
  std::vector<SimTime> disable_times;

  double online_busy_fraction = 0;
  double offline_busy_fraction = 0;  // harvested-compute utilization
  std::vector<std::vector<Interval>> online_busy;   // [gpu]
  std::vector<std::vector<Interval>> offline_busy;  // [gpu]
  std::vector<std::vector<Interval>> decode_spans;  // [gpu], per online request
};

RunReport build_report(const std::vector<LogRecord>& log);

// Paired per-request comparison against an online-only run of the same online
// trace. Throws if the online fingerprints differ.
struct PairedIncrease {
  double mean_pct = 0;
  double max_pct = 0;
  std::int64_t pairs = 0;
};
PairedIncrease ttft_increase(const RunReport& standalone, const RunReport& colocated);
PairedIncrease tpot_increase(const RunReport& standalone, const RunReport& colocated);

// Offline tokens/s relative to a reference run (no-reclamation colocation).
// Throws if the reference throughput is zero.
double normalized_offline_throughput(const RunReport& reference, const RunReport& run);

// Channel disables that fell inside each online request's lifetime.
std::map<std::int64_t, std::int64_t> disables_per_request(const RunReport& r);

std::string report_json(const RunReport& r);
std::string csv_header();
std::string csv_row(const RunReport& r, const std::optional<PairedIncrease>& ttft,
                    const std::optional<PairedIncrease>& tpot,
                    const std::optional<double>& norm_offline);

}  // namespace colosim
