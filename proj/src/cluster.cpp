#include "colosim/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace colosim {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw std::runtime_error("profile: field \"" + field + "\" " + why);
}

void expect_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      fail(where.empty() ? key : where + "." + key, "is not a recognized field");
  }
}

// Sorts by start and merges overlapping or touching intervals.
std::vector<Interval> normalize(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(),
            [](const Interval& a, const Interval& b) { return a.start < b.start; });
  std::vector<Interval> out;
  for (const Interval& iv : v) {
    if (iv.end <= iv.start) continue;
    if (!out.empty() && iv.start <= out.back().end) {
      out.back().end = std::max(out.back().end, iv.end);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

double total_length(const std::vector<Interval>& v) {
  double sum = 0;
  for (const Interval& iv : v) sum += static_cast<double>(iv.end - iv.start);
  return sum;
}

}  // namespace

double ThroughputCurve::at(double m) const {
  if (points.empty()) throw std::invalid_argument("throughput curve has no points");
  if (m <= points.front().first) return points.front().second;
  if (m >= points.back().first) return points.back().second;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (m <= points[i].first) {
      const auto& [x0, y0] = points[i - 1];
      const auto& [x1, y1] = points[i];
      if (x1 == x0) return y1;
      return y0 + (y1 - y0) * (m - x0) / (x1 - x0);
    }
  }
  return points.back().second;
}

void ThroughputCurve::validate() const {
  if (points.empty()) throw std::invalid_argument("throughput curve has no points");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].first < points[i - 1].first)
      throw std::invalid_argument("throughput curve memory values must be ascending");
    if (points[i].second < points[i - 1].second)
      throw std::invalid_argument("throughput curve must be non-decreasing");
  }
}

double memory_factor(const JobProfile& job, const SampledSeries& trace) {
  if (trace.samples.empty()) throw std::invalid_argument("memory trace is empty");
  if (job.m_max <= 0) throw std::invalid_argument("m_max must be positive");
  job.curve.validate();
  const double denom = job.curve.at(job.m_max);
  if (denom <= 0) throw std::invalid_argument("throughput at m_max must be positive");
  double thr = 0, deficit = 0;
  for (double m : trace.samples) {
    thr += job.curve.at(m);
    deficit += std::max(0.0, job.m_req - m);
  }
  const double n = static_cast<double>(trace.samples.size());
  const double raw = (thr / n - job.mac * (deficit / n)) / denom;
  return std::clamp(raw, 0.0, 1.0);
}

double multi_alignment(std::vector<Interval> busy_i, std::vector<Interval> busy_j) {
  const std::vector<Interval> a = normalize(std::move(busy_i));
  const std::vector<Interval> b = normalize(std::move(busy_j));
  if (a.empty() && b.empty()) return 1.0;
  double inter = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const SimTime lo = std::max(a[i].start, b[j].start);
    const SimTime hi = std::min(a[i].end, b[j].end);
    if (hi > lo) inter += static_cast<double>(hi - lo);
    if (a[i].end < b[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  const double uni = total_length(a) + total_length(b) - inter;
  if (uni <= 0) return 1.0;
  return inter / uni;
}

double pair_alignment(const PairShare& share) {
  if (share.union_us <= 0) return 1.0;
  return share.intersection_us / share.union_us;
}

FactorBreakdown predict_fraction(const JobProfile& job, const NodeProfile& node) {
  FactorBreakdown f;
  f.compute = node.idle_fraction;
  f.memory = memory_factor(job, node.memory_trace);
  f.multi = 1.0;
  if (job.gpus_needed > 1) {
    for (const auto& [key, share] : node.pairwise_busy)
      f.multi = std::min(f.multi, pair_alignment(share));
  }
  f.predicted = f.compute * f.memory * f.multi;
  return f;
}

Placement place(const std::vector<JobProfile>& jobs, const std::vector<NodeProfile>& nodes) {
  Placement out;
  std::set<int> occupied;
  for (const JobProfile& job : jobs) {
    PlacementDecision dec;
    dec.workload_id = job.workload_id;
    int best_node = -1;
    double best_pred = -1;
    for (const NodeProfile& node : nodes) {
      NodeVerdict v;
      v.node_id = node.node_id;
      const FactorBreakdown f = predict_fraction(job, node);
      v.predicted_fraction = f.predicted;
      if (occupied.count(node.node_id)) {
        v.reason = "node occupied";
      } else if (job.gpus_needed > node.gpus) {
        v.reason = "not enough gpus";
      } else if (job.gpus_needed > 1 && [&] {
                   for (const auto& [key, share] : node.pairwise_busy)
                     if (pair_alignment(share) < kAlignmentThreshold) return true;
                   return false;
                 }()) {
        v.reason = kAlignmentReason;
      } else if (f.predicted < job.sla_fraction) {
        v.reason = "predicted fraction below sla";
      } else {
        v.feasible = true;
      }
      if (v.feasible && (best_node == -1 || v.predicted_fraction > best_pred ||
                         (v.predicted_fraction == best_pred && node.node_id < best_node))) {
        best_node = node.node_id;
        best_pred = v.predicted_fraction;
      }
      dec.verdicts.push_back(std::move(v));
    }
    if (best_node != -1) {
      dec.placed = true;
      dec.node_id = best_node;
      dec.predicted_fraction = best_pred;
      occupied.insert(best_node);
    }
    out.decisions.push_back(std::move(dec));
  }
  return out;
}

bool SlaMonitor::observe(const std::string& workload_id, double achieved_fraction,
                         double sla_fraction) {
  int& n = below_[workload_id];
  if (achieved_fraction < sla_fraction) {
    ++n;
  } else {
    n = 0;
  }
  if (n >= patience_) {
    below_.erase(workload_id);
    return true;
  }
  return false;
}

void SlaMonitor::forget(const std::string& workload_id) { below_.erase(workload_id); }

int SlaMonitor::consecutive_below(const std::string& workload_id) const {
  auto it = below_.find(workload_id);
  return it == below_.end() ? 0 : it->second;
}

double estimate_mac(const std::vector<std::pair<double, double>>& deficit_loss) {
  if (deficit_loss.empty()) throw std::invalid_argument("no calibration samples");
  double sxy = 0, sxx = 0;
  for (const auto& [x, y] : deficit_loss) {
    sxy += x * y;
    sxx += x * x;
  }
  if (sxx == 0) return 0.0;
  return sxy / sxx;
}

double idle_fraction_from_busy(const std::vector<Interval>& busy, SimTime horizon_us,
                               SimTime slice_us) {
  if (horizon_us <= 0) throw std::invalid_argument("horizon must be positive");
  if (slice_us <= 0) throw std::invalid_argument("slice must be positive");
  const std::vector<Interval> merged = normalize(busy);
  std::int64_t idle = 0, total = 0;
  for (SimTime s = 0; s < horizon_us; s += slice_us) {
    const SimTime e = std::min(s + slice_us, horizon_us);
    ++total;
    bool overlaps = false;
    for (const Interval& iv : merged) {
      if (iv.start >= e) break;
      if (iv.end > s) {
        overlaps = true;
        break;
      }
    }
    if (!overlaps) ++idle;
  }
  return static_cast<double>(idle) / static_cast<double>(total);
}

namespace {

SampledSeries series_from_json(const json& j, const std::string& where) {
  expect_keys(j, where, {"period_us", "samples"});
  SampledSeries s;
  if (j.contains("period_us")) {
    s.period_us = j.at("period_us").get<SimTime>();
    if (s.period_us <= 0) fail(where + ".period_us", "must be positive");
  }
  if (!j.contains("samples") || !j.at("samples").is_array())
    fail(where + ".samples", "must be an array of numbers");
  for (const auto& v : j.at("samples")) {
    if (!v.is_number()) fail(where + ".samples", "must be an array of numbers");
    s.samples.push_back(v.get<double>());
  }
  return s;
}

}  // namespace

std::vector<NodeProfile> nodes_from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("profile: invalid JSON");
  expect_keys(j, "", {"nodes"});
  if (!j.contains("nodes") || !j.at("nodes").is_array()) fail("nodes", "must be an array");
  std::vector<NodeProfile> out;
  int idx = 0;
  for (const auto& nj : j.at("nodes")) {
    const std::string where = "nodes[" + std::to_string(idx++) + "]";
    expect_keys(nj, where, {"node_id", "idle_fraction", "memory_trace", "gpus", "pairwise_busy"});
    NodeProfile n;
    if (!nj.contains("node_id")) fail(where + ".node_id", "is required");
    n.node_id = nj.at("node_id").get<int>();
    if (!nj.contains("idle_fraction")) fail(where + ".idle_fraction", "is required");
    n.idle_fraction = nj.at("idle_fraction").get<double>();
    if (n.idle_fraction < 0 || n.idle_fraction > 1)
      fail(where + ".idle_fraction", "must be in [0, 1]");
    if (!nj.contains("memory_trace")) fail(where + ".memory_trace", "is required");
    n.memory_trace = series_from_json(nj.at("memory_trace"), where + ".memory_trace");
    n.gpus = nj.value("gpus", 1);
    if (n.gpus < 1) fail(where + ".gpus", "must be >= 1");
    if (nj.contains("pairwise_busy")) {
      int pidx = 0;
      for (const auto& pj : nj.at("pairwise_busy")) {
        const std::string pwhere = where + ".pairwise_busy[" + std::to_string(pidx++) + "]";
        expect_keys(pj, pwhere, {"gpu_a", "gpu_b", "intersection_us", "union_us"});
        PairShare share;
        const int a = pj.value("gpu_a", -1);
        const int b = pj.value("gpu_b", -1);
        if (a < 0 || b < 0 || a == b) fail(pwhere, "must name two distinct gpus");
        share.intersection_us = pj.value("intersection_us", 0.0);
        share.union_us = pj.value("union_us", 0.0);
        if (share.intersection_us > share.union_us)
          fail(pwhere + ".intersection_us", "must not exceed union_us");
        n.pairwise_busy[{std::min(a, b), std::max(a, b)}] = share;
      }
    }
    out.push_back(std::move(n));
  }
  return out;
}

std::vector<JobProfile> jobs_from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("profile: invalid JSON");
  expect_keys(j, "", {"jobs"});
  if (!j.contains("jobs") || !j.at("jobs").is_array()) fail("jobs", "must be an array");
  std::vector<JobProfile> out;
  int idx = 0;
  for (const auto& jj : j.at("jobs")) {
    const std::string where = "jobs[" + std::to_string(idx++) + "]";
    expect_keys(jj, where,
                {"workload_id", "throughput_curve", "m_req", "m_max", "mac", "gpus_needed",
                 "sla_fraction"});
    JobProfile job;
    if (!jj.contains("workload_id")) fail(where + ".workload_id", "is required");
    job.workload_id = jj.at("workload_id").get<std::string>();
    if (!jj.contains("throughput_curve") || !jj.at("throughput_curve").is_array())
      fail(where + ".throughput_curve", "must be an array of [memory, throughput] pairs");
    for (const auto& pt : jj.at("throughput_curve")) {
      if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
        fail(where + ".throughput_curve", "must be an array of [memory, throughput] pairs");
      job.curve.points.emplace_back(pt[0].get<double>(), pt[1].get<double>());
    }
    try {
      job.curve.validate();
    } catch (const std::invalid_argument& e) {
      fail(where + ".throughput_curve", e.what());
    }
    if (!jj.contains("m_req")) fail(where + ".m_req", "is required");
    job.m_req = jj.at("m_req").get<double>();
    if (job.m_req < 0) fail(where + ".m_req", "must be >= 0");
    if (!jj.contains("m_max")) fail(where + ".m_max", "is required");
    job.m_max = jj.at("m_max").get<double>();
    if (job.m_max <= 0) fail(where + ".m_max", "must be positive");
    job.mac = jj.value("mac", 0.0);
    if (job.mac < 0) fail(where + ".mac", "must be >= 0");
    job.gpus_needed = jj.value("gpus_needed", 1);
    if (job.gpus_needed < 1) fail(where + ".gpus_needed", "must be >= 1");
    if (!jj.contains("sla_fraction")) fail(where + ".sla_fraction", "is required");
    job.sla_fraction = jj.at("sla_fraction").get<double>();
    if (job.sla_fraction <= 0 || job.sla_fraction > 1)
      fail(where + ".sla_fraction", "must be in (0, 1]");
    out.push_back(std::move(job));
  }
  return out;
}

std::string placement_json(const Placement& p) {
  ordered_json j;
  j["placements"] = ordered_json::array();
  for (const PlacementDecision& dec : p.decisions) {
    ordered_json d;
    d["workload_id"] = dec.workload_id;
    d["placed"] = dec.placed;
    if (dec.placed) {
      d["node_id"] = dec.node_id;
      d["predicted_fraction"] = dec.predicted_fraction;
    }
    d["nodes"] = ordered_json::array();
    for (const NodeVerdict& v : dec.verdicts) {
      ordered_json nv;
      nv["node_id"] = v.node_id;
      nv["feasible"] = v.feasible;
      nv["predicted_fraction"] = v.predicted_fraction;
      nv["reason"] = v.reason;
      d["nodes"].push_back(nv);
    }
    j["placements"].push_back(d);
  }
  return j.dump(2) + "\n";
}

}  // namespace colosim
