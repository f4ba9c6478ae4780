#include "colosim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace colosim {

namespace {

using nlohmann::ordered_json;

double nearest_rank(const std::vector<double>& sorted, double pct) {
  const std::size_t n = sorted.size();
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(pct / 100.0 * static_cast<double>(n)));
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return sorted[rank - 1];
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string u64_hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ordered_json dist_json(const DistStats& d) {
  ordered_json j;
  j["count"] = d.count;
  j["mean"] = d.mean;
  j["min"] = d.min;
  j["max"] = d.max;
  j["p50"] = d.p50;
  j["p95"] = d.p95;
  j["p99"] = d.p99;
  return j;
}

PairedIncrease paired_increase(const std::map<std::int64_t, double>& base,
                               const std::map<std::int64_t, double>& other) {
  PairedIncrease out;
  double sum = 0;
  bool first = true;
  for (const auto& [id, b] : base) {
    auto it = other.find(id);
    if (it == other.end() || b <= 0) continue;
    const double pct = (it->second - b) / b * 100.0;
    sum += pct;
    if (first || pct > out.max_pct) out.max_pct = pct;
    first = false;
    ++out.pairs;
  }
  if (out.pairs > 0) out.mean_pct = sum / static_cast<double>(out.pairs);
  return out;
}

}  // namespace

DistStats dist_stats(std::vector<double> values) {
  DistStats d;
  d.count = static_cast<std::int64_t>(values.size());
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  d.mean = sum / static_cast<double>(values.size());
  d.min = values.front();
  d.max = values.back();
  d.p50 = nearest_rank(values, 50);
  d.p95 = nearest_rank(values, 95);
  d.p99 = nearest_rank(values, 99);
  return d;
}

RunReport build_report(const std::vector<LogRecord>& log) {
  RunReport r;
  struct OnlineAgg {
    SimTime arrival = kNoTime;
    SimTime first = kNoTime, last = kNoTime;
    std::int64_t tokens = 0;
    SimTime completion = kNoTime;
    SimTime prefill_end = kNoTime;
    int gpu = 0;
  };
  std::map<std::int64_t, OnlineAgg> onl;
  std::map<std::int64_t, std::string> reclaim_purpose;

  for (const LogRecord& rec : log) {
    switch (rec.kind) {
      case LogKind::kRunMeta:
        r.scenario = rec.s;
        r.preset = rec.s2;
        r.seed = rec.u0;
        r.gpus = static_cast<int>(rec.i0);
        r.horizon_us = rec.i1;
        r.online_fingerprint = rec.u1;
        r.offline_fingerprint = rec.u2;
        r.online_busy.assign(static_cast<std::size_t>(r.gpus), {});
        r.offline_busy.assign(static_cast<std::size_t>(r.gpus), {});
        r.decode_spans.assign(static_cast<std::size_t>(r.gpus), {});
        break;
      case LogKind::kArrival:
        if (rec.cls == RequestClass::kOnline) {
          ++r.online_requests;
          onl[rec.req].arrival = rec.t;
          onl[rec.req].gpu = rec.gpu;
        } else {
          ++r.offline_requests;
        }
        break;
      case LogKind::kPrefillEnd:
        if (rec.cls == RequestClass::kOnline) onl[rec.req].prefill_end = rec.t;
        break;
      case LogKind::kDone:
        if (rec.cls == RequestClass::kOnline) {
          ++r.online_completed;
          OnlineAgg& a = onl[rec.req];
          a.tokens = rec.i0;
          a.first = rec.i1;
          a.last = rec.i2;
          a.completion = rec.t;
        } else {
          ++r.offline_completed;
          r.offline_tokens += rec.i0;
        }
        break;
      case LogKind::kSnapshot:
        if (rec.cls == RequestClass::kOnline) {
          OnlineAgg& a = onl[rec.req];
          a.tokens = rec.i0;
          a.first = rec.i1;
          a.last = rec.i2;
        } else {
          r.offline_tokens += rec.i0;
        }
        break;
      case LogKind::kBusy: {
        auto& side = rec.cls == RequestClass::kOnline ? r.online_busy : r.offline_busy;
        side[static_cast<std::size_t>(rec.gpu)].push_back(Interval{rec.i0, rec.i1});
        break;
      }
      case LogKind::kDisableIssued:
        ++r.disables_issued;
        r.disable_times.push_back(rec.t);
        break;
      case LogKind::kEnableIssued:
        ++r.enables_issued;
        break;
      case LogKind::kReclaimRequest:
        reclaim_purpose[rec.i1] = rec.s;
        break;
      case LogKind::kReclaimDone: {
        ++r.reclaim_ops;
        ReclaimOpStat st;
        st.op = rec.i0;
        st.purpose = reclaim_purpose.count(rec.i0) ? reclaim_purpose[rec.i0] : "?";
        st.latency_us = rec.i1;
        st.handles = static_cast<int>(rec.ids.size());
        r.reclaim_detail.push_back(std::move(st));
        break;
      }
      case LogKind::kEvicted:
        ++r.evictions;
        break;
      case LogKind::kKilled:
        ++r.kills;
        break;
      case LogKind::kPressure:
        ++r.pressure_events;
        break;
      case LogKind::kFault:
        ++r.faults;
        break;
      default:
        break;
    }
  }

  std::vector<double> ttfts, tpots, latencies;
  for (const auto& [id, a] : onl) {
    const SimTime life_end = a.completion != kNoTime ? a.completion : r.horizon_us;
    r.online_lifetime[id] = Interval{a.arrival, life_end};
    if (a.first != kNoTime && a.tokens >= 1) {
      ++r.online_with_token;
      const double ttft = static_cast<double>(a.first - a.arrival);
      r.ttft_by_req[id] = ttft;
      ttfts.push_back(ttft);
    }
    if (a.tokens >= 2 && a.first != kNoTime && a.last != kNoTime) {
      const double tpot =
          static_cast<double>(a.last - a.first) / static_cast<double>(a.tokens - 1);
      r.tpot_by_req[id] = tpot;
      tpots.push_back(tpot);
    }
    if (a.prefill_end != kNoTime) {
      r.decode_spans[static_cast<std::size_t>(a.gpu)].push_back(
          Interval{a.prefill_end, life_end});
    }
  }
  for (const ReclaimOpStat& st : r.reclaim_detail)
    latencies.push_back(static_cast<double>(st.latency_us));
  r.ttft_us = dist_stats(std::move(ttfts));
  r.tpot_us = dist_stats(std::move(tpots));
  r.reclaim_latency_us = dist_stats(std::move(latencies));

  if (r.horizon_us > 0) {
    const double denom = static_cast<double>(r.horizon_us) * r.gpus;
    double on = 0, off = 0;
    for (const auto& v : r.online_busy)
      for (const Interval& iv : v) on += static_cast<double>(iv.end - iv.start);
    for (const auto& v : r.offline_busy)
      for (const Interval& iv : v) off += static_cast<double>(iv.end - iv.start);
    r.online_busy_fraction = on / denom;
    r.offline_busy_fraction = off / denom;
    r.offline_tokens_per_s = static_cast<double>(r.offline_tokens) /
                             (static_cast<double>(r.horizon_us) / us_per_s);
  }
  return r;
}

PairedIncrease ttft_increase(const RunReport& standalone, const RunReport& colocated) {
  if (standalone.online_fingerprint != colocated.online_fingerprint)
    throw std::runtime_error("online trace fingerprints differ; runs are not paired");
  return paired_increase(standalone.ttft_by_req, colocated.ttft_by_req);
}

PairedIncrease tpot_increase(const RunReport& standalone, const RunReport& colocated) {
  if (standalone.online_fingerprint != colocated.online_fingerprint)
    throw std::runtime_error("online trace fingerprints differ; runs are not paired");
  return paired_increase(standalone.tpot_by_req, colocated.tpot_by_req);
}

double normalized_offline_throughput(const RunReport& reference, const RunReport& run) {
  if (reference.offline_tokens_per_s <= 0)
    throw std::runtime_error("reference offline throughput is zero");
  return run.offline_tokens_per_s / reference.offline_tokens_per_s;
}

std::map<std::int64_t, std::int64_t> disables_per_request(const RunReport& r) {
  std::map<std::int64_t, std::int64_t> out;
  for (const auto& [id, life] : r.online_lifetime) {
    std::int64_t n = 0;
    for (SimTime t : r.disable_times)
      if (t >= life.start && t <= life.end) ++n;
    out[id] = n;
  }
  return out;
}

std::string report_json(const RunReport& r) {
  ordered_json j;
  j["scenario"] = r.scenario;
  j["preset"] = r.preset;
  j["seed"] = r.seed;
  j["gpus"] = r.gpus;
  j["horizon_us"] = r.horizon_us;
  j["online_fingerprint"] = u64_hex(r.online_fingerprint);
  j["offline_fingerprint"] = u64_hex(r.offline_fingerprint);
  ordered_json on;
  on["requests"] = r.online_requests;
  on["completed"] = r.online_completed;
  on["with_first_token"] = r.online_with_token;
  on["ttft_us"] = dist_json(r.ttft_us);
  on["tpot_us"] = dist_json(r.tpot_us);
  j["online"] = on;
  ordered_json off;
  off["requests"] = r.offline_requests;
  off["completed"] = r.offline_completed;
  off["tokens"] = r.offline_tokens;
  off["tokens_per_s"] = r.offline_tokens_per_s;
  off["evictions"] = r.evictions;
  off["kills"] = r.kills;
  off["faults"] = r.faults;
  j["offline"] = off;
  ordered_json mem;
  mem["pressure_events"] = r.pressure_events;
  mem["reclaim_ops"] = r.reclaim_ops;
  mem["reclaim_latency_us"] = dist_json(r.reclaim_latency_us);
  j["memory"] = mem;
  ordered_json ch;
  ch["disables_issued"] = r.disables_issued;
  ch["enables_issued"] = r.enables_issued;
  j["channel"] = ch;
  ordered_json comp;
  comp["online_busy_fraction"] = r.online_busy_fraction;
  comp["offline_busy_fraction"] = r.offline_busy_fraction;
  j["compute"] = comp;
  return j.dump(2) + "\n";
}

std::string csv_header() {
  return "scenario,preset,seed,online_requests,online_completed,ttft_mean_us,ttft_p95_us,"
         "tpot_mean_us,offline_tokens,offline_tokens_per_s,evictions,kills,faults,"
         "pressure_events,reclaim_ops,disables_issued,online_busy_fraction,"
         "offline_busy_fraction,ttft_increase_pct,tpot_increase_pct,norm_offline_throughput";
}

std::string csv_row(const RunReport& r, const std::optional<PairedIncrease>& ttft,
                    const std::optional<PairedIncrease>& tpot,
                    const std::optional<double>& norm_offline) {
  std::string out;
  out += r.scenario + "," + r.preset + "," + std::to_string(r.seed) + ",";
  out += std::to_string(r.online_requests) + "," + std::to_string(r.online_completed) + ",";
  out += fmt(r.ttft_us.mean) + "," + fmt(r.ttft_us.p95) + "," + fmt(r.tpot_us.mean) + ",";
  out += std::to_string(r.offline_tokens) + "," + fmt(r.offline_tokens_per_s) + ",";
  out += std::to_string(r.evictions) + "," + std::to_string(r.kills) + "," +
         std::to_string(r.faults) + ",";
  out += std::to_string(r.pressure_events) + "," + std::to_string(r.reclaim_ops) + "," +
         std::to_string(r.disables_issued) + ",";
  out += fmt(r.online_busy_fraction) + "," + fmt(r.offline_busy_fraction) + ",";
  out += (ttft ? fmt(ttft->mean_pct) : "") + std::string(",");
  out += (tpot ? fmt(tpot->mean_pct) : "") + std::string(",");
  out += norm_offline ? fmt(*norm_offline) : "";
  return out;
}

}  // namespace colosim
