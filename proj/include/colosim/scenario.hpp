#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "colosim/memory.hpp"
#include "colosim/policies.hpp"
#include "colosim/time.hpp"
#include "colosim/trace.hpp"

namespace colosim {

// Host-side stall injected between online decode iterations. Sampled per
// (request, token index) so the same trace sees the same gaps under every
// policy; the batch gap is the max over the requests awaiting their next token.
struct GapModel {
  enum class Kind : std::uint8_t { kNone, kConstant, kSchedule, kUniform };
  Kind kind = Kind::kNone;
  SimTime gap_us = 0;                // constant
  std::vector<SimTime> schedule_us;  // cycled per request token index
  SimTime lo_us = 0;                 // uniform, inclusive
  SimTime hi_us = 0;

  SimTime max_us() const;
  SimTime sample(std::uint64_t seed, std::int64_t request_id, int token_idx) const;
};

struct SimParams {
  // Iteration cost model: prefill is per-token, one decode iteration emits one
  // token for every active request.
  SimTime prefill_us_per_token = 10;
  SimTime decode_iter_us = 2000;

  // Compute preemption.
  SimTime toggle_latency_us = 1000;
  bool driver_patched = true;  // false: node disable cost scales with GPU count
  SimTime gpreempt_latency_us = 50;
  std::optional<SimTime> g_us;           // configured max decode gap
  std::optional<SimTime> measured_g_us;  // calibration result; wins over g_us
  GapModel gap;

  // KV pool.
  int total_handles = 128;
  int handle_size_pages = 64;
  int page_size_tokens = 16;
  SimTime remap_cost_us = 50;  // per reclaimed handle
  double initial_reserve_fraction = 0.1;
  SimTime uvm_page_penalty_us = 100;
  double static_window_frac = 0.1;  // calibration prefix of the horizon
  int max_offline_batch = 256;
  ReservationParams reservation;
  bool unsafe_skip_compute_gate = false;  // fault-injection harness; never set in presets

  SimTime effective_toggle_us(int gpus) const {
    return driver_patched ? toggle_latency_us : toggle_latency_us * gpus;
  }
  // Largest decode gap the wake-up policy must ride out.
  SimTime max_gap_us() const {
    if (measured_g_us) return *measured_g_us;
    if (g_us) return *g_us;
    return gap.max_us();
  }
};

struct StreamSpec {
  std::string path;                  // JSONL trace, or
  std::optional<GeneratorSpec> gen;  // generated per (spec, scenario seed)
};

struct Scenario {
  std::string name;
  int gpus = 1;
  SimTime horizon_us = 0;
  std::uint64_t seed = 0;
  std::string preset = "valve";
  PolicySelection policy;
  std::vector<StreamSpec> online;
  std::vector<StreamSpec> offline;
  SimParams params;
};

// Parses and validates a scenario; errors name the offending field.
Scenario load_scenario_file(const std::string& path);
Scenario scenario_from_json_text(const std::string& text, const std::string& name_hint = "");

GeneratorSpec generator_from_json_text(const std::string& text);

// Loads/generates and merges the scenario's traces, sorted by (arrival, online
// before offline, stream order). Standalone mode drops offline streams.
struct BuiltTraces {
  std::vector<TraceRecord> merged;
  std::uint64_t online_fingerprint = 0;
  std::uint64_t offline_fingerprint = 0;
};
BuiltTraces build_traces(const Scenario& sc);

// Derived variant helpers used by the compare flow.
Scenario with_preset(Scenario sc, const std::string& preset);

}  // namespace colosim
