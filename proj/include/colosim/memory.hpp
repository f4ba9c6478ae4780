#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "colosim/reclaim.hpp"
#include "colosim/time.hpp"

namespace colosim {

// Handle-granular KV pool of one GPU. Handles are the mapping/reclamation unit;
// pages inside a handle are the token-granular allocation unit.
//
// Online pages are interchangeable and tracked as an aggregate against the
// reserved-handle capacity. Offline pages are tracked per (handle, slot, request)
// because reclamation needs the resident set of each handle.
class MemoryPool {
 public:
  enum class HandleState : std::uint8_t { kFree, kOnlineReserved, kOfflineMapped };

  MemoryPool(int total_handles, int handle_size_pages, int page_size_tokens);

  int total_handles() const { return total_handles_; }
  int handle_size_pages() const { return handle_size_pages_; }
  int page_size_tokens() const { return page_size_tokens_; }
  int free_handles() const { return static_cast<int>(free_.size()); }
  int online_handles() const { return static_cast<int>(online_.size()); }
  int offline_handles() const { return static_cast<int>(offline_.size()); }

  // Sentinel page every reclaimed mapping is redirected to.
  std::int64_t quarantine_page_id() const {
    return static_cast<std::int64_t>(total_handles_) * handle_size_pages_;
  }

  // ---- online side -------------------------------------------------------
  std::int64_t online_used_pages() const { return online_used_pages_; }
  std::int64_t online_capacity_pages() const {
    return static_cast<std::int64_t>(online_.size()) * handle_size_pages_;
  }
  // Moves k free handles into the online reservation. Throws if k > free.
  void online_grow(int k, SimTime t);
  // Returns up to k reserved handles to the free pool; never strands used pages.
  int online_release(int k);
  // Charges n pages against reserved capacity. Throws on overcommit.
  void online_use_pages(std::int64_t n);
  void online_free_pages(std::int64_t n);

  // ---- offline side ------------------------------------------------------
  // All-or-nothing reservation of `pages` for a request: fills partially used
  // offline handles first (lowest id, lowest slot), then maps free handles.
  // `max_offline_handles` < 0 means uncapped. Returns false if it cannot fit.
  bool offline_reserve(std::int64_t req, int pages, SimTime t, int max_offline_handles = -1);
  // Releases every page of a request; empty handles unmap back to free.
  void offline_release(std::int64_t req);
  std::vector<std::int64_t> requests_on_handle(int handle) const;
  std::vector<int> handles_of_request(std::int64_t req) const;
  int offline_pages_of(std::int64_t req) const;

  // Resident snapshot for the reclamation policies (costs attached by caller).
  ReclaimInstance snapshot() const;

  struct ReclaimResult {
    std::vector<int> handles;                                     // now online-reserved
    std::vector<std::int64_t> evicted_requests;                   // all residents, sorted
    std::map<std::int64_t, std::vector<std::int64_t>> invalidated_pages;  // req -> page ids
  };
  // Converts the chosen offline handles to online reservation, evicting every
  // resident request outright (their pages on other handles are freed too).
  ReclaimResult apply_reclaim(const std::vector<int>& handle_ids, SimTime t);

  HandleState handle_state(int handle) const;
  SimTime handle_mapped_at(int handle) const;

  // Conservation: state sets partition the handle range; page accounting within
  // bounds. Throws std::logic_error on violation.
  void check_invariants() const;

 private:
  struct Handle {
    HandleState state = HandleState::kFree;
    SimTime mapped_at = 0;
    std::map<std::int64_t, std::vector<int>> slots_by_req;  // offline only
    int used_slots = 0;
  };

  int take_lowest_free(HandleState to, SimTime t);

  int total_handles_;
  int handle_size_pages_;
  int page_size_tokens_;
  std::vector<Handle> handles_;
  std::set<int> free_;
  std::set<int> online_;
  std::set<int> offline_;
  std::int64_t online_used_pages_ = 0;
};

// Reservation headroom controller: multiplicative increase on pressure events
// (x alpha), additive release of one handle per quiet interval T. T itself is
// controlled the same way against a target pressure rate per window.
struct ReservationParams {
  double alpha = 1.5;
  double beta = 2.0;
  SimTime t_init_us = 1 * us_per_s;
  SimTime delta_us = 100 * us_per_ms;  // t_init / 10
  SimTime t_min_us = 100 * us_per_ms;
  SimTime t_max_us = 60 * us_per_s;
  SimTime window_us = 60 * us_per_s;
  double target_per_window = 1.0;
  int h_min = 1;
  double pressure_threshold = 0.9;
};

class ReservationController {
 public:
  explicit ReservationController(ReservationParams p);

  SimTime interval() const { return t_; }
  const ReservationParams& params() const { return params_; }
  std::int64_t pressure_events() const { return static_cast<std::int64_t>(pressure_times_.size()); }

  // Headroom target after a pressure event at time t; caller applies the growth.
  // Returns min(ceil(alpha * h), cap).
  int grow_target(int h, int cap) const;
  void record_pressure(SimTime t);

  // Release tick at time t: true when the interval since the previous tick was
  // quiet (no pressure) and one handle should be released (respecting h_min).
  bool release_due(SimTime t, int h) const;
  void note_tick(SimTime t);

  // Window boundary at time t: adjusts T from the pressure rate in the closing
  // window. Returns the new T (unchanged if no adjustment applies).
  SimTime window_tick(SimTime t);

  // Pressure events with timestamp in (t - window, t].
  std::int64_t pressure_in_window(SimTime t) const;

 private:
  ReservationParams params_;
  SimTime t_;
  SimTime last_tick_ = 0;
  std::vector<SimTime> pressure_times_;
};

}  // namespace colosim
