#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "colosim/log.hpp"
#include "colosim/metrics.hpp"
#include "doctest.h"

using namespace colosim;

namespace {

// Minimal synthetic run: 1 gpu, horizon 100 ms, two online requests (one done,
// one cut off at the horizon), one offline done plus one offline snapshot.
std::vector<LogRecord> synthetic_log(SimTime ttft_shift = 0) {
  std::vector<LogRecord> log;
  std::int64_t seq = 0;
  auto push = [&](SimTime t, LogKind kind) -> LogRecord& {
    LogRecord rec;
    rec.t = t;
    rec.seq = seq++;
    rec.kind = kind;
    log.push_back(rec);
    return log.back();
  };

  LogRecord& meta = push(0, LogKind::kRunMeta);
  meta.s = "syn";
  meta.s2 = "valve";
  meta.u0 = 7;
  meta.i0 = 1;
  meta.i1 = 100'000;
  meta.u1 = 0xabcd;  // online fingerprint
  meta.u2 = 0xef01;

  auto online = [&](LogRecord& rec, std::int64_t req) {
    rec.cls = RequestClass::kOnline;
    rec.has_cls = true;
    rec.req = req;
    rec.gpu = 0;
  };
  auto offline = [&](LogRecord& rec, std::int64_t req) {
    rec.cls = RequestClass::kOffline;
    rec.has_cls = true;
    rec.req = req;
    rec.gpu = 0;
  };

  online(push(1000, LogKind::kArrival), 0);
  online(push(2000, LogKind::kArrival), 1);
  offline(push(0, LogKind::kArrival), 0);
  offline(push(0, LogKind::kArrival), 1);

  online(push(3000, LogKind::kPrefillEnd), 0);
  {
    LogRecord& rec = push(5000 + ttft_shift, LogKind::kFirstToken);
    online(rec, 0);
  }
  {
    LogRecord& rec = push(9000 + ttft_shift, LogKind::kDone);
    online(rec, 0);
    rec.i0 = 3;
    rec.i1 = 5000 + ttft_shift;
    rec.i2 = 9000 + ttft_shift;
  }
  {
    LogRecord& rec = push(100'000, LogKind::kSnapshot);
    online(rec, 1);
    rec.i0 = 2;
    rec.i1 = 12'000 + ttft_shift;
    rec.i2 = 50'000;
    rec.s = "decoding";
  }
  {
    LogRecord& rec = push(60'000, LogKind::kDone);
    offline(rec, 0);
    rec.i0 = 50;
  }
  {
    LogRecord& rec = push(100'000, LogKind::kSnapshot);
    offline(rec, 1);
    rec.i0 = 30;
    rec.s = "running";
  }
  {
    LogRecord& rec = push(9000, LogKind::kBusy);
    rec.gpu = 0;
    rec.cls = RequestClass::kOnline;
    rec.has_cls = true;
    rec.i0 = 1000;
    rec.i1 = 9000;
  }
  {
    LogRecord& rec = push(60'000, LogKind::kBusy);
    rec.gpu = 0;
    rec.cls = RequestClass::kOffline;
    rec.has_cls = true;
    rec.i0 = 20'000;
    rec.i1 = 60'000;
  }
  {
    LogRecord& rec = push(1000, LogKind::kDisableIssued);
    rec.i0 = 2000;
    rec.s = "busy";
  }
  {
    LogRecord& rec = push(95'000, LogKind::kEnableIssued);
    rec.i0 = 96'000;
  }
  return log;
}

}  // namespace

TEST_CASE("distribution stats use nearest-rank percentiles") {
  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  DistStats d = dist_stats(v);
  CHECK(d.count == 100);
  CHECK(d.mean == doctest::Approx(50.5));
  CHECK(d.min == 1);
  CHECK(d.max == 100);
  CHECK(d.p50 == 50);
  CHECK(d.p95 == 95);
  CHECK(d.p99 == 99);
  DistStats one = dist_stats({42.0});
  CHECK(one.p99 == 42.0);
  CHECK(dist_stats({}).count == 0);
}

TEST_CASE("report aggregates a run from its event log alone") {
  RunReport r = build_report(synthetic_log());
  CHECK(r.scenario == "syn");
  CHECK(r.preset == "valve");
  CHECK(r.seed == 7);
  CHECK(r.horizon_us == 100'000);
  CHECK(r.online_requests == 2);
  CHECK(r.online_completed == 1);
  CHECK(r.online_with_token == 2);  // snapshot with tokens counts too
  CHECK(r.ttft_us.count == 2);
  CHECK(r.ttft_by_req.at(0) == doctest::Approx(4000));   // 5000 - 1000
  CHECK(r.ttft_by_req.at(1) == doctest::Approx(10'000)); // 12000 - 2000
  CHECK(r.tpot_by_req.at(0) == doctest::Approx(2000));   // (9000-5000)/2
  CHECK(r.tpot_by_req.at(1) == doctest::Approx(38'000)); // (50000-12000)/1
  CHECK(r.offline_requests == 2);
  CHECK(r.offline_completed == 1);
  CHECK(r.offline_tokens == 80);  // 50 done + 30 snapshot
  CHECK(r.offline_tokens_per_s == doctest::Approx(800.0));
  CHECK(r.disables_issued == 1);
  CHECK(r.enables_issued == 1);
  CHECK(r.online_busy_fraction == doctest::Approx(0.08));
  CHECK(r.offline_busy_fraction == doctest::Approx(0.40));
  // Lifetime of the unfinished request extends to the horizon.
  CHECK(r.online_lifetime.at(1) == Interval{2000, 100'000});
  CHECK(r.online_lifetime.at(0) == Interval{1000, 9000});
  // Decode span starts at prefill end.
  REQUIRE(r.decode_spans.at(0).size() == 1);
  CHECK(r.decode_spans.at(0)[0] == Interval{3000, 9000});
}

TEST_CASE("paired increase is zero against itself and exact on a shifted run") {
  RunReport base = build_report(synthetic_log());
  PairedIncrease self = ttft_increase(base, base);
  CHECK(self.pairs == 2);
  CHECK(self.mean_pct == doctest::Approx(0.0));
  CHECK(self.max_pct == doctest::Approx(0.0));

  // TTFTs 4000 -> 4160 (+4%) and 10000 -> 10400 (+4%).
  RunReport shifted = build_report(synthetic_log(/*ttft_shift=*/160));
  shifted.ttft_by_req[1] = 10'400;
  PairedIncrease inc = ttft_increase(base, shifted);
  CHECK(inc.pairs == 2);
  CHECK(inc.mean_pct == doctest::Approx(4.0));
  CHECK(inc.max_pct == doctest::Approx(4.0));
}

TEST_CASE("pairing refuses runs over different online traces") {
  RunReport base = build_report(synthetic_log());
  RunReport other = base;
  other.online_fingerprint ^= 1;
  CHECK_THROWS_WITH_AS(ttft_increase(base, other),
                       "online trace fingerprints differ; runs are not paired",
                       std::runtime_error);
  CHECK_THROWS_AS(tpot_increase(base, other), std::runtime_error);
}

TEST_CASE("offline throughput normalizes against a reference run") {
  RunReport ref = build_report(synthetic_log());
  CHECK(normalized_offline_throughput(ref, ref) == doctest::Approx(1.0));
  RunReport half = ref;
  half.offline_tokens_per_s = ref.offline_tokens_per_s / 2;
  CHECK(normalized_offline_throughput(ref, half) == doctest::Approx(0.5));
  RunReport zero = ref;
  zero.offline_tokens_per_s = 0;
  CHECK_THROWS_WITH_AS(normalized_offline_throughput(zero, ref),
                       "reference offline throughput is zero", std::runtime_error);
}

TEST_CASE("disable counting respects each request's lifetime") {
  RunReport r = build_report(synthetic_log());
  r.disable_times = {500, 1000, 9000, 50'000, 100'000};
  auto per_req = disables_per_request(r);
  // Request 0 lives [1000, 9000]: sees 1000 and 9000.
  CHECK(per_req.at(0) == 2);
  // Request 1 lives [2000, 100000]: sees 9000, 50000, 100000.
  CHECK(per_req.at(1) == 3);
}

TEST_CASE("report serialization is idempotent and the log round-trips as jsonl") {
  std::vector<LogRecord> log = synthetic_log();
  CHECK(report_json(build_report(log)) == report_json(build_report(log)));

  std::stringstream ss;
  write_log_jsonl(ss, log);
  std::vector<LogRecord> back = read_log_jsonl(ss, "syn");
  REQUIRE(back.size() == log.size());
  CHECK(back == log);
  // Rebuilding the report from the parsed log changes nothing.
  CHECK(report_json(build_report(back)) == report_json(build_report(log)));
}

TEST_CASE("malformed log lines carry their line number") {
  std::stringstream bad("{\"time_us\":0,\"seq\":0,\"kind\":\"disabled\"}\n{oops\n");
  CHECK_THROWS_WITH_AS(read_log_jsonl(bad, "ev.jsonl"), doctest::Contains("ev.jsonl:2"),
                       std::runtime_error);
  std::stringstream unknown("{\"time_us\":0,\"seq\":0,\"kind\":\"mystery\"}\n");
  CHECK_THROWS_WITH_AS(read_log_jsonl(unknown, "ev.jsonl"), doctest::Contains("kind"),
                       std::runtime_error);
}

TEST_CASE("csv rows align with the header and leave absent comparisons empty") {
  const std::string header = csv_header();
  const auto cols = std::count(header.begin(), header.end(), ',');
  RunReport r = build_report(synthetic_log());

  const std::string bare = csv_row(r, std::nullopt, std::nullopt, std::nullopt);
  CHECK(std::count(bare.begin(), bare.end(), ',') == cols);
  CHECK(bare.substr(bare.size() - 3) == ",,,");  // three empty comparison cells

  PairedIncrease inc{4.0, 5.0, 2};
  const std::string full = csv_row(r, inc, inc, 0.97);
  CHECK(std::count(full.begin(), full.end(), ',') == cols);
  CHECK(full.find(",,") == std::string::npos);
  CHECK(full.find("syn,valve,7,") == 0);
  CHECK(full.find("0.96999999999999997") != std::string::npos);  // %.17g round-trip
}
