#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "colosim/time.hpp"

namespace colosim {

// Snapshot of the offline-mapped handle population at reclamation time.
struct ReclaimHandle {
  int id = 0;
  SimTime mapped_at = 0;                // allocation timestamp (FIFO order)
  std::vector<std::int64_t> requests;   // offline requests with >= 1 page on this handle
};

struct ReclaimInstance {
  std::vector<ReclaimHandle> handles;
  std::map<std::int64_t, std::int64_t> cost;  // request id -> recompute cost (tokens)
};

// Total eviction cost of a handle subset: sum of cost over the union of resident
// requests (a request straddling several chosen handles is counted once).
std::int64_t evicted_cost(const ReclaimInstance& inst, const std::vector<int>& handle_ids);

// Greedy selection: k rounds, each picking the handle whose eviction adds the
// least marginal cost given already-scheduled evictions; ties go to the smallest
// handle id. k is clamped to the handle count. k=0 yields an empty pick.
std::vector<int> selective_reclaim(const ReclaimInstance& inst, int k);

// Baseline: k oldest handles by allocation timestamp, ties by smallest id.
std::vector<int> fifo_reclaim(const ReclaimInstance& inst, int k);

// Exhaustive minimum over all k-subsets; ties broken by lexicographically
// smallest sorted id sequence. Intended for tests; requires <= 20 handles.
std::vector<int> oracle_reclaim(const ReclaimInstance& inst, int k);

}  // namespace colosim
