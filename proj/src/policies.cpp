#include "colosim/policies.hpp"

namespace colosim {

std::optional<PolicySelection> parse_preset(const std::string& name) {
  if (name == "valve") return PolicySelection{ComputePolicy::kChannel, MemoryPolicy::kOurMem, false};
  if (name == "channel+prism") return PolicySelection{ComputePolicy::kChannel, MemoryPolicy::kPrism, false};
  if (name == "channel+uvm") return PolicySelection{ComputePolicy::kChannel, MemoryPolicy::kUvm, false};
  if (name == "channel+static") return PolicySelection{ComputePolicy::kChannel, MemoryPolicy::kStaticMem, false};
  if (name == "kernel+uvm") return PolicySelection{ComputePolicy::kKernelPreempt, MemoryPolicy::kUvm, false};
  if (name == "gpreempt+uvm") return PolicySelection{ComputePolicy::kGpreempt, MemoryPolicy::kUvm, false};
  if (name == "standalone") return PolicySelection{ComputePolicy::kChannel, MemoryPolicy::kOurMem, true};
  return std::nullopt;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "kernel+uvm", "gpreempt+uvm", "channel+uvm", "channel+prism", "channel+static", "valve",
      "standalone",
  };
  return names;
}

}  // namespace colosim
