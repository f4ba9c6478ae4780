#include "colosim/engine.hpp"

#include <stdexcept>
#include <string>

namespace colosim {

std::int64_t EventQueue::schedule(SimTime time, EventKind kind, std::int32_t gpu,
                                  std::int64_t a, std::int64_t b) {
  if (time < now_) {
    throw std::logic_error("EventQueue::schedule: event at t=" + std::to_string(time) +
                           " is in the past (clock=" + std::to_string(now_) + ")");
  }
  SimEvent ev{time, next_seq_++, kind, gpu, a, b};
  heap_.push(ev);
  return ev.seq;
}

SimTime EventQueue::run(std::optional<SimTime> until) {
  while (!heap_.empty()) {
    const SimEvent ev = heap_.top();
    if (until && ev.time > *until) break;
    heap_.pop();
    now_ = ev.time;
    if (handler_) handler_(ev);
  }
  if (until && *until > now_) now_ = *until;
  return now_;
}

}  // namespace colosim
