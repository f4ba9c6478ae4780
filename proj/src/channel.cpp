#include "colosim/channel.hpp"

#include <stdexcept>

namespace colosim {

ChannelController::ChannelController(SimTime toggle_us, SimTime cooldown_us, Hooks hooks)
    : toggle_us_(toggle_us), cooldown_us_(cooldown_us), hooks_(std::move(hooks)) {
  if (toggle_us < 0 || cooldown_us < 0)
    throw std::invalid_argument("ChannelController: latencies must be >= 0");
}

void ChannelController::issue_disable(SimTime t, bool memory_cause) {
  state_ = State::kDisabling;
  effective_at_ = t + toggle_us_;
  ++gen_;
  ++disables_issued_;
  hooks_.schedule(effective_at_, gen_, false);
  if (hooks_.log) hooks_.log(t, ChannelLog::kDisableIssued, effective_at_, memory_cause);
}

void ChannelController::issue_enable(SimTime t) {
  state_ = State::kEnabling;
  effective_at_ = t + toggle_us_;
  ++gen_;
  hooks_.schedule(effective_at_, gen_, false);
  if (hooks_.log) hooks_.log(t, ChannelLog::kEnableIssued, effective_at_, false);
}

void ChannelController::note_busy(SimTime t) {
  any_busy_ = true;
  enable_after_disable_ = false;
  if (cooldown_pending_) {
    cooldown_pending_ = false;
    ++cooldown_gen_;
    if (hooks_.log) hooks_.log(t, ChannelLog::kCooldownCancelled, 0, false);
  }
  if (state_ == State::kEnabled || state_ == State::kEnabling) issue_disable(t, false);
}

void ChannelController::note_all_idle(SimTime t) {
  any_busy_ = false;
  if (state_ == State::kEnabled || state_ == State::kEnabling) return;  // nothing to wake
  cooldown_pending_ = true;
  ++cooldown_gen_;
  hooks_.schedule(t + cooldown_us_, cooldown_gen_, true);
  if (hooks_.log) hooks_.log(t, ChannelLog::kCooldownScheduled, t + cooldown_us_, false);
}

SimTime ChannelController::ensure_disabled(SimTime t) {
  switch (state_) {
    case State::kDisabled:
      return t;
    case State::kDisabling:
      return effective_at_;
    case State::kEnabled:
    case State::kEnabling:
      issue_disable(t, true);
      return effective_at_;
  }
  return t;
}

void ChannelController::handle_toggle(SimTime t, std::int64_t gen) {
  if (gen != gen_) return;  // superseded command
  if (state_ == State::kDisabling) {
    state_ = State::kDisabled;
    if (hooks_.log) hooks_.log(t, ChannelLog::kDisabled, 0, false);
    if (hooks_.on_disabled) hooks_.on_disabled(t);
    if (enable_after_disable_ && !any_busy_) {
      enable_after_disable_ = false;
      issue_enable(t);
    }
  } else if (state_ == State::kEnabling) {
    state_ = State::kEnabled;
    if (hooks_.log) hooks_.log(t, ChannelLog::kEnabled, 0, false);
    if (hooks_.on_enabled) hooks_.on_enabled(t);
  }
}

void ChannelController::handle_cooldown(SimTime t, std::int64_t gen) {
  if (gen != cooldown_gen_ || !cooldown_pending_) return;
  cooldown_pending_ = false;
  if (any_busy_) return;
  if (state_ == State::kDisabled) {
    issue_enable(t);
  } else if (state_ == State::kDisabling) {
    enable_after_disable_ = true;
  }
}

}  // namespace colosim
