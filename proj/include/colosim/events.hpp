#pragma once

#include <cstdint>

#include "colosim/time.hpp"

namespace colosim {

enum class EventKind : std::uint8_t {
  kArrival,          // a = merged trace index
  kOnlineIterStart,  // a = generation
  kOnlineIterEnd,    // a = generation
  kOnlineWake,       // a = generation (gap expiry / retry pump)
  kOfflineIterEnd,   // a = generation
  kChannelToggle,    // a = generation
  kCooldownExpiry,   // a = generation
  kReclaimDone,      // a = generation, b = reclaim op id
  kReservationTick,  // a = generation
  kReservationWindow,
  kStaticCalibEnd,
  kGeneric,  // tests
};

struct SimEvent {
  SimTime time = 0;
  std::int64_t seq = 0;  // insertion order; total order tie-break
  EventKind kind = EventKind::kGeneric;
  std::int32_t gpu = -1;  // -1 = node-wide
  std::int64_t a = 0;
  std::int64_t b = 0;
};

// Later time runs later; equal times run in insertion order.
struct SimEventAfter {
  bool operator()(const SimEvent& lhs, const SimEvent& rhs) const {
    if (lhs.time != rhs.time) return lhs.time > rhs.time;
    return lhs.seq > rhs.seq;
  }
};

}  // namespace colosim
