#pragma once

#include <functional>
#include <optional>
#include <queue>
#include <vector>

#include "colosim/events.hpp"
#include "colosim/time.hpp"

namespace colosim {

// Deterministic event queue: (time, insertion sequence) total order, integer clock.
class EventQueue {
 public:
  using Handler = std::function<void(const SimEvent&)>;

  SimTime now() const { return now_; }
  bool empty() const { return heap_.empty(); }
  std::size_t pending() const { return heap_.size(); }

  void set_handler(Handler h) { handler_ = std::move(h); }

  // Schedules an event; sequence is stamped from insertion order.
  // Scheduling before the current clock signals a simulator logic bug.
  std::int64_t schedule(SimTime time, EventKind kind, std::int32_t gpu = -1,
                        std::int64_t a = 0, std::int64_t b = 0);

  // Processes events in order until the queue is empty, or past `until` if given.
  // Returns the final clock: `until` when provided, otherwise the last event time
  // (0 when no event ran). Events strictly after `until` are left unprocessed.
  SimTime run(std::optional<SimTime> until = std::nullopt);

 private:
  std::priority_queue<SimEvent, std::vector<SimEvent>, SimEventAfter> heap_;
  Handler handler_;
  SimTime now_ = 0;
  std::int64_t next_seq_ = 0;
};

}  // namespace colosim
