#include "colosim/memory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace colosim {

MemoryPool::MemoryPool(int total_handles, int handle_size_pages, int page_size_tokens)
    : total_handles_(total_handles),
      handle_size_pages_(handle_size_pages),
      page_size_tokens_(page_size_tokens) {
  if (total_handles <= 0 || handle_size_pages <= 0 || page_size_tokens <= 0)
    throw std::invalid_argument("MemoryPool: sizes must be > 0");
  handles_.resize(static_cast<std::size_t>(total_handles));
  for (int i = 0; i < total_handles; ++i) free_.insert(i);
}

int MemoryPool::take_lowest_free(HandleState to, SimTime t) {
  if (free_.empty()) throw std::logic_error("MemoryPool: no free handle to take");
  const int id = *free_.begin();
  free_.erase(free_.begin());
  Handle& h = handles_[static_cast<std::size_t>(id)];
  h.state = to;
  h.mapped_at = t;
  (to == HandleState::kOnlineReserved ? online_ : offline_).insert(id);
  return id;
}

void MemoryPool::online_grow(int k, SimTime t) {
  if (k < 0) throw std::invalid_argument("online_grow: k must be >= 0");
  if (k > free_handles()) throw std::logic_error("online_grow: k exceeds free handles");
  for (int i = 0; i < k; ++i) take_lowest_free(HandleState::kOnlineReserved, t);
}

int MemoryPool::online_release(int k) {
  if (k < 0) throw std::invalid_argument("online_release: k must be >= 0");
  int released = 0;
  while (released < k && !online_.empty()) {
    const std::int64_t cap_after =
        (static_cast<std::int64_t>(online_.size()) - 1) * handle_size_pages_;
    if (cap_after < online_used_pages_) break;
    const int id = *online_.begin();
    online_.erase(online_.begin());
    handles_[static_cast<std::size_t>(id)].state = HandleState::kFree;
    free_.insert(id);
    ++released;
  }
  return released;
}

void MemoryPool::online_use_pages(std::int64_t n) {
  if (n < 0) throw std::invalid_argument("online_use_pages: n must be >= 0");
  if (online_used_pages_ + n > online_capacity_pages())
    throw std::logic_error("online_use_pages: overcommit beyond reserved capacity");
  online_used_pages_ += n;
}

void MemoryPool::online_free_pages(std::int64_t n) {
  if (n < 0 || n > online_used_pages_)
    throw std::logic_error("online_free_pages: bad page count");
  online_used_pages_ -= n;
}

bool MemoryPool::offline_reserve(std::int64_t req, int pages, SimTime t, int max_offline_handles) {
  if (pages < 0) throw std::invalid_argument("offline_reserve: pages must be >= 0");
  if (pages == 0) return true;

  // Capacity check first: partial slots in mapped handles plus mappable free handles.
  std::int64_t avail = 0;
  for (int id : offline_) avail += handle_size_pages_ - handles_[static_cast<std::size_t>(id)].used_slots;
  int mappable = free_handles();
  if (max_offline_handles >= 0)
    mappable = std::min(mappable, std::max(0, max_offline_handles - offline_handles()));
  avail += static_cast<std::int64_t>(mappable) * handle_size_pages_;
  if (avail < pages) return false;

  int remaining = pages;
  auto fill = [&](int id) {
    Handle& h = handles_[static_cast<std::size_t>(id)];
    std::vector<int>& slots = h.slots_by_req[req];
    // Slot occupancy is per-handle cumulative; exact slot indices only matter
    // for invalidation reports, so assign ascending from the current fill level.
    while (remaining > 0 && h.used_slots < handle_size_pages_) {
      slots.push_back(h.used_slots++);
      --remaining;
    }
    if (slots.empty()) h.slots_by_req.erase(req);
  };
  for (int id : offline_) {
    if (remaining == 0) break;
    fill(id);
  }
  while (remaining > 0) fill(take_lowest_free(HandleState::kOfflineMapped, t));
  return true;
}

void MemoryPool::offline_release(std::int64_t req) {
  std::vector<int> emptied;
  for (int id : offline_) {
    Handle& h = handles_[static_cast<std::size_t>(id)];
    auto it = h.slots_by_req.find(req);
    if (it == h.slots_by_req.end()) continue;
    h.used_slots -= static_cast<int>(it->second.size());
    h.slots_by_req.erase(it);
    if (h.used_slots == 0) emptied.push_back(id);
  }
  for (int id : emptied) {
    offline_.erase(id);
    handles_[static_cast<std::size_t>(id)].state = HandleState::kFree;
    free_.insert(id);
  }
}

std::vector<std::int64_t> MemoryPool::requests_on_handle(int handle) const {
  const Handle& h = handles_.at(static_cast<std::size_t>(handle));
  std::vector<std::int64_t> out;
  out.reserve(h.slots_by_req.size());
  for (const auto& [req, slots] : h.slots_by_req) out.push_back(req);
  return out;
}

std::vector<int> MemoryPool::handles_of_request(std::int64_t req) const {
  std::vector<int> out;
  for (int id : offline_) {
    if (handles_[static_cast<std::size_t>(id)].slots_by_req.count(req)) out.push_back(id);
  }
  return out;
}

int MemoryPool::offline_pages_of(std::int64_t req) const {
  int pages = 0;
  for (int id : offline_) {
    const Handle& h = handles_[static_cast<std::size_t>(id)];
    auto it = h.slots_by_req.find(req);
    if (it != h.slots_by_req.end()) pages += static_cast<int>(it->second.size());
  }
  return pages;
}

ReclaimInstance MemoryPool::snapshot() const {
  ReclaimInstance inst;
  for (int id : offline_) {
    const Handle& h = handles_[static_cast<std::size_t>(id)];
    ReclaimHandle rh;
    rh.id = id;
    rh.mapped_at = h.mapped_at;
    for (const auto& [req, slots] : h.slots_by_req) rh.requests.push_back(req);
    inst.handles.push_back(std::move(rh));
  }
  return inst;
}

MemoryPool::ReclaimResult MemoryPool::apply_reclaim(const std::vector<int>& handle_ids, SimTime t) {
  ReclaimResult result;
  std::set<std::int64_t> evicted;
  for (int id : handle_ids) {
    Handle& h = handles_.at(static_cast<std::size_t>(id));
    if (h.state != HandleState::kOfflineMapped)
      throw std::logic_error("apply_reclaim: handle " + std::to_string(id) + " is not offline-mapped");
    for (const auto& [req, slots] : h.slots_by_req) {
      evicted.insert(req);
      std::vector<std::int64_t>& pages = result.invalidated_pages[req];
      for (int s : slots) pages.push_back(static_cast<std::int64_t>(id) * handle_size_pages_ + s);
    }
    h.slots_by_req.clear();
    h.used_slots = 0;
    h.state = HandleState::kOnlineReserved;
    h.mapped_at = t;
    offline_.erase(id);
    online_.insert(id);
    result.handles.push_back(id);
  }
  // Residual pages of evicted requests on unchosen handles are plain frees.
  for (std::int64_t req : evicted) offline_release(req);
  result.evicted_requests.assign(evicted.begin(), evicted.end());
  for (auto& [req, pages] : result.invalidated_pages) std::sort(pages.begin(), pages.end());
  return result;
}

MemoryPool::HandleState MemoryPool::handle_state(int handle) const {
  return handles_.at(static_cast<std::size_t>(handle)).state;
}

SimTime MemoryPool::handle_mapped_at(int handle) const {
  return handles_.at(static_cast<std::size_t>(handle)).mapped_at;
}

void MemoryPool::check_invariants() const {
  if (static_cast<int>(free_.size() + online_.size() + offline_.size()) != total_handles_)
    throw std::logic_error("MemoryPool: handle sets do not partition the pool");
  if (online_used_pages_ < 0 || online_used_pages_ > online_capacity_pages())
    throw std::logic_error("MemoryPool: online page accounting out of bounds");
  for (int i = 0; i < total_handles_; ++i) {
    const Handle& h = handles_[static_cast<std::size_t>(i)];
    const bool in_free = free_.count(i) > 0;
    const bool in_online = online_.count(i) > 0;
    const bool in_offline = offline_.count(i) > 0;
    if ((h.state == HandleState::kFree) != in_free ||
        (h.state == HandleState::kOnlineReserved) != in_online ||
        (h.state == HandleState::kOfflineMapped) != in_offline)
      throw std::logic_error("MemoryPool: handle state/set mismatch");
    int slots = 0;
    for (const auto& [req, s] : h.slots_by_req) slots += static_cast<int>(s.size());
    if (slots != h.used_slots || h.used_slots > handle_size_pages_)
      throw std::logic_error("MemoryPool: slot accounting mismatch");
    if (h.state != HandleState::kOfflineMapped && h.used_slots != 0)
      throw std::logic_error("MemoryPool: non-offline handle holds offline pages");
  }
}

ReservationController::ReservationController(ReservationParams p) : params_(p), t_(p.t_init_us) {
  if (p.alpha <= 1.0 || p.beta <= 1.0) throw std::invalid_argument("ReservationParams: alpha/beta must be > 1");
  if (p.t_init_us <= 0 || p.t_min_us <= 0 || p.t_max_us < p.t_min_us || p.window_us <= 0)
    throw std::invalid_argument("ReservationParams: bad interval bounds");
  if (p.h_min < 0) throw std::invalid_argument("ReservationParams: h_min must be >= 0");
}

int ReservationController::grow_target(int h, int cap) const {
  const int target = static_cast<int>(std::ceil(params_.alpha * static_cast<double>(h)));
  return std::min(std::max({target, h, 1}), cap);
}

void ReservationController::record_pressure(SimTime t) { pressure_times_.push_back(t); }

bool ReservationController::release_due(SimTime t, int h) const {
  if (h <= params_.h_min) return false;
  for (auto it = pressure_times_.rbegin(); it != pressure_times_.rend(); ++it) {
    if (*it <= last_tick_) break;
    if (*it <= t) return false;  // pressure inside this interval: not quiet
  }
  return true;
}

void ReservationController::note_tick(SimTime t) { last_tick_ = t; }

SimTime ReservationController::window_tick(SimTime t) {
  const double rate = static_cast<double>(pressure_in_window(t));
  if (rate > params_.target_per_window) {
    t_ = std::min(static_cast<SimTime>(static_cast<double>(t_) * params_.beta), params_.t_max_us);
  } else {
    t_ = std::max(t_ - params_.delta_us, params_.t_min_us);
  }
  return t_;
}

std::int64_t ReservationController::pressure_in_window(SimTime t) const {
  std::int64_t n = 0;
  for (auto it = pressure_times_.rbegin(); it != pressure_times_.rend(); ++it) {
    if (*it <= t - params_.window_us) break;
    if (*it <= t) ++n;
  }
  return n;
}

}  // namespace colosim
