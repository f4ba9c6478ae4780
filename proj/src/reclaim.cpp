#include "colosim/reclaim.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace colosim {

namespace {

std::int64_t cost_of(const ReclaimInstance& inst, std::int64_t req) {
  auto it = inst.cost.find(req);
  if (it == inst.cost.end()) throw std::invalid_argument("reclaim: request without cost entry");
  return it->second;
}

}  // namespace

std::int64_t evicted_cost(const ReclaimInstance& inst, const std::vector<int>& handle_ids) {
  std::set<std::int64_t> evicted;
  std::int64_t total = 0;
  for (int id : handle_ids) {
    auto it = std::find_if(inst.handles.begin(), inst.handles.end(),
                           [id](const ReclaimHandle& h) { return h.id == id; });
    if (it == inst.handles.end()) throw std::invalid_argument("evicted_cost: unknown handle id");
    for (std::int64_t r : it->requests) {
      if (evicted.insert(r).second) total += cost_of(inst, r);
    }
  }
  return total;
}

std::vector<int> selective_reclaim(const ReclaimInstance& inst, int k) {
  if (k < 0) throw std::invalid_argument("selective_reclaim: k must be >= 0");
  k = std::min<int>(k, static_cast<int>(inst.handles.size()));

  std::vector<std::size_t> remaining(inst.handles.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;
  std::set<std::int64_t> evicted;
  std::vector<int> picked;
  picked.reserve(k);

  for (int round = 0; round < k; ++round) {
    bool found = false;
    std::size_t best = 0;
    std::int64_t best_cost = 0;
    int best_id = 0;
    for (std::size_t idx : remaining) {
      const ReclaimHandle& h = inst.handles[idx];
      std::int64_t marginal = 0;
      for (std::int64_t r : h.requests) {
        if (!evicted.count(r)) marginal += cost_of(inst, r);
      }
      if (!found || marginal < best_cost || (marginal == best_cost && h.id < best_id)) {
        found = true;
        best = idx;
        best_cost = marginal;
        best_id = h.id;
      }
    }
    const ReclaimHandle& chosen = inst.handles[best];
    picked.push_back(chosen.id);
    for (std::int64_t r : chosen.requests) evicted.insert(r);
    remaining.erase(std::find(remaining.begin(), remaining.end(), best));
  }
  return picked;
}

std::vector<int> fifo_reclaim(const ReclaimInstance& inst, int k) {
  if (k < 0) throw std::invalid_argument("fifo_reclaim: k must be >= 0");
  k = std::min<int>(k, static_cast<int>(inst.handles.size()));
  std::vector<const ReclaimHandle*> order;
  order.reserve(inst.handles.size());
  for (const ReclaimHandle& h : inst.handles) order.push_back(&h);
  std::sort(order.begin(), order.end(), [](const ReclaimHandle* a, const ReclaimHandle* b) {
    if (a->mapped_at != b->mapped_at) return a->mapped_at < b->mapped_at;
    return a->id < b->id;
  });
  std::vector<int> picked;
  picked.reserve(k);
  for (int i = 0; i < k; ++i) picked.push_back(order[static_cast<std::size_t>(i)]->id);
  return picked;
}

std::vector<int> oracle_reclaim(const ReclaimInstance& inst, int k) {
  if (k < 0) throw std::invalid_argument("oracle_reclaim: k must be >= 0");
  const int n = static_cast<int>(inst.handles.size());
  if (n > 20) throw std::invalid_argument("oracle_reclaim: instance too large (> 20 handles)");
  k = std::min(k, n);
  if (k == 0) return {};

  std::vector<int> ids;
  ids.reserve(n);
  for (const ReclaimHandle& h : inst.handles) ids.push_back(h.id);
  std::sort(ids.begin(), ids.end());

  // Enumerate k-subsets of the sorted ids in lexicographic order; the first
  // subset achieving the minimum wins, which realizes the tie rule directly.
  std::vector<int> pick(static_cast<std::size_t>(k));
  std::vector<int> best;
  std::int64_t best_cost = 0;
  std::vector<int> stack(static_cast<std::size_t>(k), 0);
  // Iterative combination walk to avoid recursion.
  int depth = 0;
  stack[0] = 0;
  while (depth >= 0) {
    if (stack[static_cast<std::size_t>(depth)] > n - (k - depth)) {
      --depth;
      if (depth >= 0) ++stack[static_cast<std::size_t>(depth)];
      continue;
    }
    pick[static_cast<std::size_t>(depth)] = ids[static_cast<std::size_t>(stack[static_cast<std::size_t>(depth)])];
    if (depth == k - 1) {
      const std::int64_t c = evicted_cost(inst, pick);
      if (best.empty() || c < best_cost) {
        best = pick;
        best_cost = c;
      }
      ++stack[static_cast<std::size_t>(depth)];
    } else {
      ++depth;
      stack[static_cast<std::size_t>(depth)] = stack[static_cast<std::size_t>(depth - 1)] + 1;
    }
  }
  return best;
}

}  // namespace colosim
