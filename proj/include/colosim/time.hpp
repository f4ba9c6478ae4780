#pragma once

#include <cstdint>

namespace colosim {

// All simulation time is integer microseconds since run start.
using SimTime = std::int64_t;

constexpr SimTime kNoTime = -1;

constexpr SimTime us_per_ms = 1000;
constexpr SimTime us_per_s = 1000000;

}  // namespace colosim
