#pragma once

#include <cstdint>
#include <functional>

#include "colosim/time.hpp"

namespace colosim {

// Cooldown wake-up rule: offline compute resumes only after online has been idle
// for twice the largest observed/configured online decode gap.
struct CooldownPolicy {
  SimTime max_gap_us = 0;
  SimTime cooldown_us() const { return 2 * max_gap_us; }
};

enum class ChannelLog : std::uint8_t {
  kDisableIssued,  // aux = effective time
  kDisabled,
  kEnableIssued,  // aux = effective time
  kEnabled,
  kCooldownScheduled,  // aux = expiry time
  kCooldownCancelled,
};

// Node-wide gate over offline compute channels. Disable/enable commands take a
// fixed toggle latency to take effect; an in-flight offline kernel keeps the GPU
// until the disable becomes effective (the drain window), then is suspended with
// its remaining duration saved by the caller.
class ChannelController {
 public:
  enum class State : std::uint8_t { kEnabled, kDisabling, kDisabled, kEnabling };

  struct Hooks {
    // Schedule a future controller event; `cooldown` selects the expiry stream.
    std::function<void(SimTime when, std::int64_t gen, bool cooldown)> schedule;
    std::function<void(SimTime t)> on_disabled;  // suspend in-flight offline kernels
    std::function<void(SimTime t)> on_enabled;   // resume/pump offline engines
    std::function<void(SimTime t, ChannelLog what, SimTime aux, bool memory_cause)> log;
  };

  ChannelController(SimTime toggle_us, SimTime cooldown_us, Hooks hooks);

  State state() const { return state_; }
  bool offline_compute_allowed() const { return state_ == State::kEnabled; }
  std::int64_t disables_issued() const { return disables_issued_; }

  // Online activity edge (no lane was active, one became active). Cancels any
  // pending wake-up and issues a disable unless one is already in flight/done.
  void note_busy(SimTime t);
  // All online lanes went idle; arms the cooldown timer.
  void note_all_idle(SimTime t);

  // Reclamation ordering: returns the time offline compute is (or will be)
  // stopped, issuing a disable itself if none is pending.
  SimTime ensure_disabled(SimTime t);

  // Event deliveries from the queue.
  void handle_toggle(SimTime t, std::int64_t gen);
  void handle_cooldown(SimTime t, std::int64_t gen);

  // Effective stop time of the pending disable; valid in kDisabling.
  SimTime pending_effective() const { return effective_at_; }

 private:
  void issue_disable(SimTime t, bool memory_cause);
  void issue_enable(SimTime t);

  SimTime toggle_us_;
  SimTime cooldown_us_;
  Hooks hooks_;
  State state_ = State::kEnabled;
  bool any_busy_ = false;
  bool enable_after_disable_ = false;  // cooldown elapsed while still disabling
  std::int64_t gen_ = 0;
  std::int64_t cooldown_gen_ = 0;
  bool cooldown_pending_ = false;
  SimTime effective_at_ = 0;
  std::int64_t disables_issued_ = 0;
};

}  // namespace colosim
