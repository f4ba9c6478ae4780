#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "colosim/time.hpp"

namespace colosim {

enum class RequestClass : std::uint8_t { kOnline, kOffline };

inline const char* to_string(RequestClass c) { return c == RequestClass::kOnline ? "online" : "offline"; }

// One workload arrival. Serialized as JSON Lines with exactly these field names:
// {"arrival_us": int, "class": "online"|"offline", "prompt_tokens": int,
//  "output_tokens": int, "stream_id": string}
struct TraceRecord {
  SimTime arrival_us = 0;
  RequestClass cls = RequestClass::kOnline;
  int prompt_tokens = 0;
  int output_tokens = 0;
  std::string stream_id;

  bool operator==(const TraceRecord&) const = default;
};

// Parses a JSONL trace; malformed lines are reported with their line number.
// Records are stable-sorted by arrival time (equal arrivals keep file order).
std::vector<TraceRecord> load_trace(std::istream& in, const std::string& name = "<stream>");
std::vector<TraceRecord> load_trace_file(const std::string& path);

void save_trace(std::ostream& out, const std::vector<TraceRecord>& records);
void save_trace_file(const std::string& path, const std::vector<TraceRecord>& records);

// Order- and content-sensitive fingerprint; used to validate paired-run comparisons.
std::uint64_t trace_fingerprint(const std::vector<TraceRecord>& records);

// Arrival pattern generators. All are deterministic per (spec, seed).
struct GeneratorSpec {
  enum class Pattern : std::uint8_t { kPoisson, kSpike, kBatch };
  Pattern pattern = Pattern::kPoisson;
  RequestClass cls = RequestClass::kOnline;
  // poisson
  double rate_per_s = 0.0;
  // spike: base rate with periodic bursts of spike rate
  double base_rate_per_s = 0.0;
  double spike_rate_per_s = 0.0;
  SimTime spike_period_us = 0;
  SimTime spike_width_us = 0;
  // batch: batch_size simultaneous arrivals every batch_period_us starting at t=0
  int batch_size = 0;
  SimTime batch_period_us = 0;
  // token counts drawn uniformly from inclusive ranges
  std::pair<int, int> prompt_tokens{1, 1};
  std::pair<int, int> output_tokens{1, 1};
  std::string stream_id = "s0";
};

// Generates arrivals in [0, horizon_us). Zero rates yield empty traces;
// negative rates and non-positive periods/widths/sizes are rejected.
std::vector<TraceRecord> gen_trace(const GeneratorSpec& spec, std::uint64_t seed, SimTime horizon_us);

// Fixed-period samples of a utilization-like quantity; every sample must be in [0, 1].
struct UtilizationSeries {
  SimTime period_us = 100 * us_per_ms;
  std::vector<double> samples;
};

// Population coefficient of variation (std/mean). Errors on empty input and on
// zero mean (distinct messages).
double coefficient_of_variation(const std::vector<double>& samples);
double coefficient_of_variation(const UtilizationSeries& series);

// Counts per fixed-width bin over [0, horizon_us); used for arrival burstiness CV.
std::vector<double> arrival_counts(const std::vector<TraceRecord>& records, SimTime horizon_us,
                                   SimTime bin_us);

// Idle windows of the online compute stream while at least one online request is
// mid-decode. `busy` are the online busy intervals of one GPU, `decode_spans`
// the [first decode eligibility, completion) span per request.
struct Interval {
  SimTime start = 0;
  SimTime end = 0;
  bool operator==(const Interval&) const = default;
};

struct GapMeasurement {
  std::vector<Interval> gaps;
  SimTime max_gap_us = 0;
};

GapMeasurement measure_gaps(std::vector<Interval> busy, std::vector<Interval> decode_spans);

}  // namespace colosim
