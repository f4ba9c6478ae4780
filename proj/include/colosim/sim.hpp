#pragma once

#include <vector>

#include "colosim/log.hpp"
#include "colosim/scenario.hpp"

namespace colosim {

struct SimOutput {
  std::vector<LogRecord> log;
  SimTime final_time = 0;
};

// Runs one simulation of the scenario up to its horizon. The log is a pure
// function of (scenario, traces): reruns are record-for-record identical.
SimOutput run_colocation(const Scenario& sc);
SimOutput run_colocation_with_traces(const Scenario& sc, const BuiltTraces& traces);

}  // namespace colosim
