#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <vector>

#include "colosim/metrics.hpp"
#include "colosim/sim.hpp"
#include "doctest.h"

using namespace colosim;

namespace {

BuiltTraces make_traces(std::vector<TraceRecord> online, std::vector<TraceRecord> offline) {
  for (auto& r : online) r.cls = RequestClass::kOnline;
  for (auto& r : offline) r.cls = RequestClass::kOffline;
  auto by_arrival = [](const TraceRecord& a, const TraceRecord& b) {
    return a.arrival_us < b.arrival_us;
  };
  std::stable_sort(online.begin(), online.end(), by_arrival);
  std::stable_sort(offline.begin(), offline.end(), by_arrival);
  BuiltTraces t;
  t.online_fingerprint = trace_fingerprint(online);
  t.offline_fingerprint = trace_fingerprint(offline);
  std::merge(online.begin(), online.end(), offline.begin(), offline.end(),
             std::back_inserter(t.merged), by_arrival);
  return t;
}

Scenario base_scenario(const std::string& preset, SimTime horizon) {
  Scenario sc;
  sc.name = "t";
  sc.gpus = 1;
  sc.horizon_us = horizon;
  sc.seed = 11;
  sc.preset = preset;
  sc.policy = *parse_preset(preset);
  return sc;
}

std::vector<const LogRecord*> of_kind(const std::vector<LogRecord>& log, LogKind k) {
  std::vector<const LogRecord*> out;
  for (const LogRecord& r : log)
    if (r.kind == k) out.push_back(&r);
  return out;
}

const LogRecord* done_of(const std::vector<LogRecord>& log, RequestClass cls, std::int64_t req) {
  for (const LogRecord& r : log)
    if (r.kind == LogKind::kDone && r.has_cls && r.cls == cls && r.req == req) return &r;
  return nullptr;
}

}  // namespace

TEST_CASE("kernel preemption waits out the full in-flight prefill; the channel drains early") {
  // Offline prefill of 4000 tokens runs [0, 40000); the online request lands at
  // 10000 with 30000 us of offline kernel still ahead of it.
  BuiltTraces traces = make_traces({{10'000, RequestClass::kOnline, 100, 2, "s"}},
                                   {{0, RequestClass::kOffline, 4000, 50, "b"}});

  SimOutput kernel = run_colocation_with_traces(base_scenario("kernel+uvm", 300'000), traces);
  auto kw = of_kind(kernel.log, LogKind::kPreemptWait);
  REQUIRE(!kw.empty());
  CHECK(kw[0]->i0 == 30'000);  // blocked until the iteration boundary
  CHECK(of_kind(kernel.log, LogKind::kDisableIssued).empty());
  RunReport krep = build_report(kernel.log);
  CHECK(krep.ttft_by_req.at(0) == 33'000.0);
  // The prefill was never suspended: one unbroken busy interval.
  REQUIRE(!krep.offline_busy[0].empty());
  CHECK(krep.offline_busy[0].front().start == 0);
  CHECK(krep.offline_busy[0].front().end == 40'000);

  SimOutput valve = run_colocation_with_traces(base_scenario("valve", 300'000), traces);
  auto vw = of_kind(valve.log, LogKind::kPreemptWait);
  REQUIRE(!vw.empty());
  CHECK(vw[0]->i0 == 1000);  // capped by the disable toggle
  RunReport vrep = build_report(valve.log);
  CHECK(vrep.ttft_by_req.at(0) == 4000.0);
  REQUIRE(!vrep.offline_busy[0].empty());
  CHECK(vrep.offline_busy[0].front().start == 0);
  CHECK(vrep.offline_busy[0].front().end == 11'000);  // suspended at the drain

  SimOutput gp = run_colocation_with_traces(base_scenario("gpreempt+uvm", 300'000), traces);
  auto gw = of_kind(gp.log, LogKind::kPreemptWait);
  REQUIRE(!gw.empty());
  CHECK(gw[0]->i0 == 50);
  RunReport grep_ = build_report(gp.log);
  CHECK(grep_.ttft_by_req.at(0) == 3050.0);
}

TEST_CASE("gpreempt re-disables on every decode gap; the cooldown holds one disable") {
  auto gapped = [](const std::string& preset) {
    Scenario sc = base_scenario(preset, 300'000);
    sc.params.gap.kind = GapModel::Kind::kUniform;
    sc.params.gap.lo_us = 100;
    sc.params.gap.hi_us = 300;
    sc.params.g_us = 300;
    return sc;
  };
  BuiltTraces traces = make_traces({{10'000, RequestClass::kOnline, 100, 8, "s"}},
                                   {{0, RequestClass::kOffline, 4000, 50, "b"}});

  SimOutput gp = run_colocation_with_traces(gapped("gpreempt+uvm"), traces);
  for (const LogRecord* r : of_kind(gp.log, LogKind::kDisableIssued))
    CHECK(r->i0 - r->t == 50);  // cheap per-toggle latency
  RunReport grep_ = build_report(gp.log);
  CHECK(grep_.disables_issued > 1);
  CHECK(disables_per_request(grep_).at(0) > 1);  // one request, many toggles

  SimOutput valve = run_colocation_with_traces(gapped("valve"), traces);
  for (const LogRecord* r : of_kind(valve.log, LogKind::kDisableIssued))
    CHECK(r->i0 - r->t == 1000);
  RunReport vrep = build_report(valve.log);
  CHECK(vrep.disables_issued == 1);  // cooldown 600 us outlasts every 100-300 us gap
  for (const auto& [req, n] : disables_per_request(vrep)) {
    CAPTURE(req);
    CHECK(n <= 1);
  }
}

TEST_CASE("uvm covers a shortfall by migration and bills the online side per page") {
  Scenario sc = base_scenario("channel+uvm", 300'000);
  sc.params.total_handles = 16;
  sc.params.handle_size_pages = 4;
  sc.params.page_size_tokens = 16;
  // No up-front reservation under uvm, so the offline request maps the whole
  // pool (1024 tokens = 64 pages = 16 handles) and the 512-token online prompt
  // (32 pages) must migrate 8 handles out.
  BuiltTraces traces = make_traces({{50'000, RequestClass::kOnline, 512, 3, "s"}},
                                   {{0, RequestClass::kOffline, 1000, 24, "b"}});
  SimOutput out = run_colocation_with_traces(sc, traces);

  auto requests = of_kind(out.log, LogKind::kReclaimRequest);
  REQUIRE(requests.size() == 1);
  CHECK(requests[0]->s == "uvm");
  CHECK(requests[0]->i0 == 8);
  auto delays = of_kind(out.log, LogKind::kOnlineDelay);
  REQUIRE(!delays.empty());
  CHECK(delays[0]->s == "migration");
  // 1000 us toggle gate + 8 handles x 4 pages x 100 us/page.
  CHECK(delays[0]->i0 == 4200);
  CHECK(!of_kind(out.log, LogKind::kEvicted).empty());
  CHECK(of_kind(out.log, LogKind::kFault).empty());

  RunReport rep = build_report(out.log);
  CHECK(rep.ttft_by_req.at(0) == 11'320.0);

  // Online completion (t=65'320) hands every handle back -- uvm keeps no
  // reservation headroom -- so the evicted request is re-admitted once the
  // re-enable toggle lands (66'320), re-prefills over its 1000 input tokens
  // plus the 20 it had already emitted, and decodes the remaining 4.
  bool handed_back = false;
  for (const LogRecord* r : of_kind(out.log, LogKind::kReserveChange))
    if (r->s == "release" && r->t == 65'320 && r->i1 == 0) handed_back = true;
  CHECK(handed_back);
  std::vector<const LogRecord*> off_prefills;
  for (const LogRecord* r : of_kind(out.log, LogKind::kPrefillStart))
    if (r->cls == RequestClass::kOffline) off_prefills.push_back(r);
  REQUIRE(off_prefills.size() == 2);
  CHECK(off_prefills[1]->t == 66'320);
  CHECK(off_prefills[1]->i0 == 1020);
  CHECK(rep.offline_completed == 1);
  const LogRecord* od = done_of(out.log, RequestClass::kOffline, 0);
  REQUIRE(od != nullptr);
  CHECK(od->t == 66'320 + 10'200 + 4 * 2'000);
  CHECK(od->i0 == 24);
}

TEST_CASE("prism never reclaims: the online side stalls until offline frees memory") {
  Scenario sc = base_scenario("channel+prism", 300'000);
  sc.params.total_handles = 16;
  sc.params.handle_size_pages = 4;
  sc.params.page_size_tokens = 16;
  // Offline holds 14 handles, the online reserve 2, free 0: the 256-token
  // online prompt (16 pages) cannot fit and prism has no way to take memory.
  BuiltTraces traces = make_traces({{50'000, RequestClass::kOnline, 256, 3, "s"}},
                                   {{0, RequestClass::kOffline, 860, 36, "b"}});
  SimOutput out = run_colocation_with_traces(sc, traces);

  auto stalls = of_kind(out.log, LogKind::kStall);
  REQUIRE(!stalls.empty());
  CHECK(stalls[0]->t == 50'000);
  CHECK(stalls[0]->s == "memory");
  CHECK(of_kind(out.log, LogKind::kReclaimRequest).empty());
  CHECK(of_kind(out.log, LogKind::kReclaimDone).empty());
  CHECK(of_kind(out.log, LogKind::kEvicted).empty());
  CHECK(of_kind(out.log, LogKind::kKilled).empty());

  // The offline request finishes exactly as if it ran alone...
  const LogRecord* off_done = done_of(out.log, RequestClass::kOffline, 0);
  REQUIRE(off_done != nullptr);
  CHECK(off_done->t == 80'600);  // 8600 us prefill + 36 x 2000 us decode
  CHECK(off_done->i0 == 36);
  // ...and only then does the online request get to run.
  RunReport rep = build_report(out.log);
  CHECK(rep.online_completed == 1);
  CHECK(rep.ttft_by_req.at(0) == 35'160.0);  // 30600 stalled + 2560 prefill + 2000
  CHECK(rep.evictions == 0);
}

TEST_CASE("prism with no offline work serves online exactly like a standalone node") {
  auto build = [](const std::string& preset) {
    Scenario sc = base_scenario(preset, 500'000);
    sc.params.gap.kind = GapModel::Kind::kUniform;
    sc.params.gap.lo_us = 100;
    sc.params.gap.hi_us = 300;
    return sc;
  };
  std::vector<TraceRecord> online;
  for (int i = 0; i < 5; ++i)
    online.push_back({10'000 + i * 40'000, RequestClass::kOnline, 400, 6, "s"});
  BuiltTraces traces = make_traces(online, {});

  RunReport prism = build_report(run_colocation_with_traces(build("channel+prism"), traces).log);
  RunReport alone = build_report(run_colocation_with_traces(build("standalone"), traces).log);
  CHECK(prism.online_completed == 5);
  CHECK(alone.online_completed == 5);
  CHECK(prism.ttft_by_req == alone.ttft_by_req);
  CHECK(prism.tpot_by_req == alone.tpot_by_req);
}

TEST_CASE("static partitioning calibrates a budget, then kills offline on burst overflow") {
  Scenario sc = base_scenario("channel+static", 1'000'000);  // calibration [0, 100000)
  sc.params.total_handles = 16;
  sc.params.handle_size_pages = 4;
  sc.params.page_size_tokens = 16;
  // Calibration sees the 300-token prompt grow the reserve to 5 handles, so the
  // budget is the 11 free handles left; the offline request fits it exactly.
  // The 500-token burst later needs 2 more handles than remain and kills it.
  BuiltTraces traces = make_traces({{10'000, RequestClass::kOnline, 300, 3, "s"},
                                    {200'000, RequestClass::kOnline, 500, 3, "s"}},
                                   {{0, RequestClass::kOffline, 600, 100, "b"}});
  SimOutput out = run_colocation_with_traces(sc, traces);

  auto limits = of_kind(out.log, LogKind::kStaticLimit);
  REQUIRE(limits.size() == 1);
  CHECK(limits[0]->t == 100'000);
  CHECK(limits[0]->i0 == 11);

  // Offline admission only opens once calibration ends.
  const LogRecord* off_start = nullptr;
  for (const LogRecord& r : out.log)
    if (r.kind == LogKind::kPrefillStart && r.has_cls && r.cls == RequestClass::kOffline) {
      off_start = &r;
      break;
    }
  REQUIRE(off_start != nullptr);
  CHECK(off_start->t == 100'000);
  CHECK(off_start->i0 == 600);

  auto killed = of_kind(out.log, LogKind::kKilled);
  REQUIRE(killed.size() == 1);
  CHECK(killed[0]->req == 0);
  CHECK(of_kind(out.log, LogKind::kReclaimRequest).empty());  // kills are instant

  RunReport rep = build_report(out.log);
  CHECK(rep.kills == 1);
  CHECK(rep.offline_completed == 0);
  CHECK(rep.ttft_by_req.at(0) == 5000.0);
  CHECK(rep.ttft_by_req.at(1) == 7000.0);  // killing freed memory with no op wait
}
