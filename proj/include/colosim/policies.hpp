#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace colosim {

// How online work takes the GPU back from offline work.
enum class ComputePolicy : std::uint8_t {
  kChannel,        // channel disable with toggle latency, context save, cooldown wake
  kKernelPreempt,  // offline yields only at iteration boundaries, immediate wake
  kGpreempt,       // timeslice switch: small fixed latency, immediate wake
};

// Who owns spare KV memory and how online gets it back.
enum class MemoryPolicy : std::uint8_t {
  kOurMem,     // reservation headroom + quarantine-remap reclamation
  kUvm,        // no headroom; demand migration with per-page penalty
  kPrism,      // offline keeps its memory; online queues on shortage
  kStaticMem,  // fixed offline budget from a calibration trough; bursts kill offline
};

struct PolicySelection {
  ComputePolicy compute = ComputePolicy::kChannel;
  MemoryPolicy memory = MemoryPolicy::kOurMem;
  bool standalone = false;  // online-only reference run (offline streams dropped)
};

inline const char* to_string(ComputePolicy p) {
  switch (p) {
    case ComputePolicy::kChannel: return "channel";
    case ComputePolicy::kKernelPreempt: return "kernel";
    case ComputePolicy::kGpreempt: return "gpreempt";
  }
  return "?";
}

inline const char* to_string(MemoryPolicy p) {
  switch (p) {
    case MemoryPolicy::kOurMem: return "our_mem";
    case MemoryPolicy::kUvm: return "uvm";
    case MemoryPolicy::kPrism: return "prism";
    case MemoryPolicy::kStaticMem: return "static";
  }
  return "?";
}

// Named policy pairings exposed by the CLI. "standalone" is the online-only
// reference mode used for interference baselines.
std::optional<PolicySelection> parse_preset(const std::string& name);
const std::vector<std::string>& preset_names();

}  // namespace colosim
