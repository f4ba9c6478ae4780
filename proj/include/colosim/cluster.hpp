#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "colosim/time.hpp"
#include "colosim/trace.hpp"

namespace colosim {

// Fixed-period samples of an unbounded quantity, e.g. spare memory in handles.
struct SampledSeries {
  SimTime period_us = 100 * us_per_ms;
  std::vector<double> samples;
};

// Piecewise-linear, non-decreasing memory -> throughput map. Evaluation clamps
// to the endpoints outside the sampled range.
struct ThroughputCurve {
  std::vector<std::pair<double, double>> points;  // (memory, tokens/s), x ascending

  double at(double m) const;
  void validate() const;  // throws std::invalid_argument naming the violation
};

struct PairShare {
  double intersection_us = 0;
  double union_us = 0;
};

struct NodeProfile {
  int node_id = 0;
  double idle_fraction = 0;  // fraction of timeslices with zero online busy time
  SampledSeries memory_trace;
  int gpus = 1;
  std::map<std::pair<int, int>, PairShare> pairwise_busy;
};

struct JobProfile {
  std::string workload_id;
  ThroughputCurve curve;
  double m_req = 0;
  double m_max = 0;  // curve saturation point
  double mac = 0;    // throughput loss per unit of expected memory deficit
  int gpus_needed = 1;
  double sla_fraction = 1.0;  // required share of standalone throughput, (0,1]
};

// clamp((mean Thrput(M(t)) - mac * mean max(0, m_req - M(t))) / Thrput(m_max), 0, 1)
double memory_factor(const JobProfile& job, const SampledSeries& trace);

// Overlap duration / union duration of two busy-interval sets; 1.0 when both
// are empty, symmetric in its arguments.
double multi_alignment(std::vector<Interval> busy_i, std::vector<Interval> busy_j);
double pair_alignment(const PairShare& share);

struct FactorBreakdown {
  double compute = 0;
  double memory = 0;
  double multi = 0;
  double predicted = 0;  // product of the three
};
FactorBreakdown predict_fraction(const JobProfile& job, const NodeProfile& node);

struct NodeVerdict {
  int node_id = -1;
  bool feasible = false;
  double predicted_fraction = 0;
  std::string reason;  // empty when feasible
};

struct PlacementDecision {
  std::string workload_id;
  bool placed = false;
  int node_id = -1;
  double predicted_fraction = 0;
  std::vector<NodeVerdict> verdicts;  // node order
};

struct Placement {
  std::vector<PlacementDecision> decisions;  // job order
};

// Greedy SLA-feasible placement: per job, among feasible nodes pick the highest
// predicted fraction (ties: smaller node id); one job per node; jobs with no
// feasible node stay pending with per-node reasons.
Placement place(const std::vector<JobProfile>& jobs, const std::vector<NodeProfile>& nodes);

inline constexpr double kAlignmentThreshold = 0.95;
inline constexpr const char* kAlignmentReason = "pairwise alignment below 0.95";

// Evicts a job once its achieved fraction has been below its SLA for
// `patience` consecutive windows.
class SlaMonitor {
 public:
  explicit SlaMonitor(int patience = 3) : patience_(patience) {}

  // One window's observation; true means evict now.
  bool observe(const std::string& workload_id, double achieved_fraction, double sla_fraction);
  void forget(const std::string& workload_id);
  int consecutive_below(const std::string& workload_id) const;

 private:
  int patience_;
  std::map<std::string, int> below_;
};

// Least-squares slope through the origin of (deficit, throughput loss) samples.
double estimate_mac(const std::vector<std::pair<double, double>>& deficit_loss);

// Fraction of fixed timeslices of [0, horizon) with zero busy overlap.
double idle_fraction_from_busy(const std::vector<Interval>& busy, SimTime horizon_us,
                               SimTime slice_us = 100 * us_per_ms);

// JSON I/O for the what-if placement flow; schema errors name the field.
std::vector<NodeProfile> nodes_from_json_text(const std::string& text);
std::vector<JobProfile> jobs_from_json_text(const std::string& text);
std::string placement_json(const Placement& p);

}  // namespace colosim
