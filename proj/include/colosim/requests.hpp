#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colosim/time.hpp"

namespace colosim {

enum class OnlineState : std::uint8_t { kQueued, kPrefilling, kDecoding, kDone };
enum class OfflineState : std::uint8_t { kWaiting, kRunning, kEvictedWaiting, kDone, kKilled };

inline const char* to_string(OnlineState s) {
  switch (s) {
    case OnlineState::kQueued: return "queued";
    case OnlineState::kPrefilling: return "prefilling";
    case OnlineState::kDecoding: return "decoding";
    case OnlineState::kDone: return "done";
  }
  return "?";
}

inline const char* to_string(OfflineState s) {
  switch (s) {
    case OfflineState::kWaiting: return "waiting";
    case OfflineState::kRunning: return "running";
    case OfflineState::kEvictedWaiting: return "evicted-waiting";
    case OfflineState::kDone: return "done";
    case OfflineState::kKilled: return "killed";
  }
  return "?";
}

// Latency-sensitive request. Tokens are emitted at the end of decode iterations,
// one per iteration; prefill emits none.
struct OnlineRequest {
  std::int64_t id = 0;
  SimTime arrival = 0;
  int prompt_tokens = 0;
  int output_tokens = 0;
  int gpu = 0;
  OnlineState state = OnlineState::kQueued;
  std::vector<SimTime> token_emit_times;  // strictly increasing, size <= output_tokens
  SimTime completion = kNoTime;
  int pages = 0;               // KV pages currently held
  std::uint64_t digest = 0;    // running hash over emitted (id, token_idx)

  SimTime first_token_at() const { return token_emit_times.empty() ? kNoTime : token_emit_times.front(); }
};

// Throughput-oriented request. Eviction keeps input plus generated tokens; resume
// recomputes their KV (prefill over input+generated) and continues decoding.
struct OfflineRequest {
  std::int64_t id = 0;
  SimTime arrival = 0;
  int input_tokens = 0;
  int output_tokens = 0;
  int gpu = 0;
  OfflineState state = OfflineState::kWaiting;
  int generated = 0;
  int reserved_pages = 0;
  bool prefill_done = false;  // valid while running: current context materialized
  int evictions = 0;
  std::uint64_t digest = 0;  // running hash of (id, token index); eviction-lossless
  SimTime completion = kNoTime;

  // Recompute cost if evicted now (tokens whose KV must be rebuilt).
  std::int64_t recompute_cost() const { return static_cast<std::int64_t>(input_tokens) + generated; }
};

}  // namespace colosim
