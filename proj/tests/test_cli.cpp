#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "colosim/log.hpp"
#include "colosim/metrics.hpp"
#include "colosim/trace.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace colosim;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("colosim_cli_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path so = scratch / "stdout.txt";
  const fs::path se = scratch / "stderr.txt";
  const std::string cmd =
      std::string(COLOSIM_CLI_PATH) + " " + args + " >" + so.string() + " 2>" + se.string();
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// A small colocated scenario over explicit trace files in `dir`.
fs::path write_scenario(const fs::path& dir) {
  std::string on, off;
  for (int i = 0; i < 4; ++i) {
    on += R"({"arrival_us": )" + std::to_string(10'000 + i * 150'000) +
          R"(, "class": "online", "prompt_tokens": 400, "output_tokens": 6, "stream_id": "s"})" +
          "\n";
  }
  for (int i = 0; i < 2; ++i) {
    off += R"({"arrival_us": 0, "class": "offline", "prompt_tokens": 5000, "output_tokens": 200, "stream_id": "b"})" +
           std::string("\n");
  }
  write_file(dir / "on.jsonl", on);
  write_file(dir / "off.jsonl", off);
  const std::string sc = R"({
    "name": "clismoke",
    "horizon_us": 2000000,
    "seed": 5,
    "preset": "valve",
    "online": {"path": ")" + (dir / "on.jsonl").string() + R"("},
    "offline": {"path": ")" + (dir / "off.jsonl").string() + R"("},
    "params": {"g_us": 300, "gap": {"type": "uniform", "lo_us": 100, "hi_us": 300}}
  })";
  write_file(dir / "sc.json", sc);
  return dir / "sc.json";
}

}  // namespace

TEST_CASE("run persists events, report, and csv rows; reruns are byte-identical") {
  const fs::path dir = fresh_dir("run");
  const fs::path sc = write_scenario(dir);

  CliResult r1 = run_cli("run --scenario " + sc.string() + " --out " + (dir / "o1").string(), dir);
  CHECK(r1.code == 0);
  CHECK(r1.out.find("clismoke/valve seed=5") != std::string::npos);

  const fs::path run_dir = dir / "o1" / "clismoke" / "valve" / "5";
  REQUIRE(fs::exists(run_dir / "events.jsonl"));
  REQUIRE(fs::exists(run_dir / "report.json"));
  const std::string csv1 = slurp(dir / "o1" / "metrics.csv");
  CHECK(count_lines(csv1) == 2);  // header + one row
  CHECK(csv1.rfind(csv_header() + "\n", 0) == 0);

  // The persisted report is exactly what the persisted events rebuild to.
  RunReport rebuilt = build_report(read_log_file((run_dir / "events.jsonl").string()));
  CHECK(report_json(rebuilt) == slurp(run_dir / "report.json"));

  CliResult r2 = run_cli("run --scenario " + sc.string() + " --out " + (dir / "o2").string(), dir);
  CHECK(r2.code == 0);
  CHECK(slurp(dir / "o2" / "clismoke" / "valve" / "5" / "events.jsonl") ==
        slurp(run_dir / "events.jsonl"));

  // Rows append; the header is written once.
  CliResult r3 = run_cli("run --scenario " + sc.string() + " --out " + (dir / "o1").string(), dir);
  CHECK(r3.code == 0);
  const std::string csv2 = slurp(dir / "o1" / "metrics.csv");
  CHECK(count_lines(csv2) == 3);
  CHECK(csv2.find(csv_header()) == csv2.rfind(csv_header()));
}

TEST_CASE("run overrides preset, seed, and horizon") {
  const fs::path dir = fresh_dir("override");
  const fs::path sc = write_scenario(dir);
  CliResult r = run_cli("run --scenario " + sc.string() +
                            " --preset channel+uvm --seed 9 --horizon-us 1500000 --out " +
                            (dir / "o").string(),
                        dir);
  CHECK(r.code == 0);
  const fs::path events = dir / "o" / "clismoke" / "channel+uvm" / "9" / "events.jsonl";
  REQUIRE(fs::exists(events));
  std::vector<LogRecord> log = read_log_file(events.string());
  REQUIRE(!log.empty());
  CHECK(log[0].kind == LogKind::kRunMeta);
  CHECK(log[0].s == "clismoke");
  CHECK(log[0].s2 == "channel+uvm");
  CHECK(log[0].u0 == 9);
  CHECK(log[0].i1 == 1'500'000);
}

TEST_CASE("bad invocations exit nonzero with a named error") {
  const fs::path dir = fresh_dir("bad");
  const fs::path sc = write_scenario(dir);

  CliResult unknown = run_cli(
      "run --scenario " + sc.string() + " --preset warp --out " + (dir / "o").string(), dir);
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("error: unknown preset") != std::string::npos);
  CHECK(unknown.err.find("presets:") != std::string::npos);
  CHECK(unknown.err.find("valve") != std::string::npos);

  CliResult missing = run_cli("run --scenario " + (dir / "nope.json").string(), dir);
  CHECK(missing.code == 1);
  CHECK(missing.err.find("error:") != std::string::npos);

  CliResult nosub = run_cli("", dir);
  CHECK(nosub.code != 0);

  CliResult noev = run_cli("report --events " + (dir / "nope.jsonl").string(), dir);
  CHECK(noev.code == 1);
  CHECK(noev.err.find("error:") != std::string::npos);
}

TEST_CASE("compare prints one row per preset and persists every run") {
  const fs::path dir = fresh_dir("compare");
  const fs::path sc = write_scenario(dir);
  const fs::path out = dir / "c";

  CliResult r = run_cli("compare --scenario " + sc.string() + " --out " + out.string(), dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("preset") != std::string::npos);
  const char* presets[] = {"standalone",   "kernel+uvm",     "gpreempt+uvm", "channel+uvm",
                           "channel+prism", "channel+static", "valve"};
  for (const char* p : presets) {
    CAPTURE(p);
    CHECK(r.out.find(p) != std::string::npos);
    CHECK(fs::exists(out / "clismoke" / p / "5" / "events.jsonl"));
  }
  CHECK(count_lines(slurp(out / "metrics.csv")) == 8);  // header + standalone + six presets

  const fs::path out2 = dir / "c2";
  CliResult r2 = run_cli("compare --scenario " + sc.string() + " --standalone-offline --out " +
                             out2.string(),
                         dir);
  CHECK(r2.code == 0);
  CHECK(r2.out.find("offline-standalone") != std::string::npos);
  CHECK(r2.out.find("dedicated gpu") != std::string::npos);
  CHECK(fs::exists(out2 / "clismoke" / "offline-standalone" / "5" / "events.jsonl"));

  CliResult sel = run_cli("compare --scenario " + sc.string() +
                              " --presets valve --seeds 5 7 --out " + (dir / "c3").string(),
                          dir);
  CHECK(sel.code == 0);
  CHECK(fs::exists(dir / "c3" / "clismoke" / "valve" / "5" / "events.jsonl"));
  CHECK(fs::exists(dir / "c3" / "clismoke" / "valve" / "7" / "events.jsonl"));
  CHECK(sel.out.find("kernel+uvm") == std::string::npos);
}

TEST_CASE("gen-trace is deterministic per seed and loadable") {
  const fs::path dir = fresh_dir("gen");
  write_file(dir / "g.json", R"({
    "pattern": "poisson", "rate_per_s": 50, "class": "online",
    "prompt_tokens": [100, 300], "output_tokens": [5, 10], "stream_id": "g"
  })");

  auto gen = [&](const std::string& seed, const std::string& out) {
    return run_cli("gen-trace --spec " + (dir / "g.json").string() + " --seed " + seed +
                       " --horizon-us 1000000 --out " + (dir / out).string(),
                   dir);
  };
  CHECK(gen("7", "t1.jsonl").code == 0);
  CHECK(gen("7", "t2.jsonl").code == 0);
  CHECK(gen("8", "t3.jsonl").code == 0);
  const std::string t1 = slurp(dir / "t1.jsonl");
  CHECK(t1 == slurp(dir / "t2.jsonl"));
  CHECK(t1 != slurp(dir / "t3.jsonl"));

  std::vector<TraceRecord> recs = load_trace_file((dir / "t1.jsonl").string());
  REQUIRE(recs.size() > 10);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].arrival_us >= 0);
    CHECK(recs[i].arrival_us < 1'000'000);
    CHECK(recs[i].cls == RequestClass::kOnline);
    CHECK(recs[i].prompt_tokens >= 100);
    CHECK(recs[i].prompt_tokens <= 300);
    if (i > 0) CHECK(recs[i].arrival_us >= recs[i - 1].arrival_us);
  }
}

TEST_CASE("schedule reproduces the golden placement") {
  const fs::path dir = fresh_dir("sched");
  write_file(dir / "nodes.json", R"({
    "nodes": [
      {"node_id": 0, "idle_fraction": 0.9, "gpus": 2,
       "memory_trace": {"period_us": 100000, "samples": [12, 12]},
       "pairwise_busy": [{"gpu_a": 0, "gpu_b": 1, "intersection_us": 99, "union_us": 100}]},
      {"node_id": 1, "idle_fraction": 0.5, "gpus": 1,
       "memory_trace": {"period_us": 100000, "samples": [2, 2]},
       "pairwise_busy": []}
    ]
  })");
  write_file(dir / "jobs.json", R"({
    "jobs": [
      {"workload_id": "a", "throughput_curve": [[0, 0], [10, 10]],
       "m_req": 8, "m_max": 10, "mac": 0.5, "gpus_needed": 1, "sla_fraction": 0.5},
      {"workload_id": "b", "throughput_curve": [[0, 0], [10, 10]],
       "m_req": 8, "m_max": 10, "mac": 0.5, "gpus_needed": 1, "sla_fraction": 0.5}
    ]
  })");

  CliResult to_file = run_cli("schedule --nodes " + (dir / "nodes.json").string() + " --jobs " +
                                  (dir / "jobs.json").string() + " --out " + (dir / "p.json").string(),
                              dir);
  CHECK(to_file.code == 0);
  const std::string produced = slurp(dir / "p.json");

  CliResult to_stdout = run_cli("schedule --nodes " + (dir / "nodes.json").string() + " --jobs " +
                                    (dir / "jobs.json").string(),
                                dir);
  CHECK(to_stdout.code == 0);
  CHECK(to_stdout.out == produced);

  const fs::path golden = fs::path(COLOSIM_GOLDEN_DIR) / "schedule_placement.json";
  if (std::getenv("UPDATE_GOLDEN") != nullptr) {
    fs::create_directories(golden.parent_path());
    write_file(golden, produced);
  }
  REQUIRE_MESSAGE(fs::exists(golden), "golden missing; rerun with UPDATE_GOLDEN=1");
  CHECK(produced == slurp(golden));
}

TEST_CASE("report rebuilds the persisted report byte-for-byte") {
  const fs::path dir = fresh_dir("report");
  const fs::path sc = write_scenario(dir);
  CHECK(run_cli("run --scenario " + sc.string() + " --out " + (dir / "o").string(), dir).code == 0);
  const fs::path run_dir = dir / "o" / "clismoke" / "valve" / "5";

  CliResult r = run_cli("report --events " + (run_dir / "events.jsonl").string() + " --out " +
                            (dir / "rebuilt.json").string(),
                        dir);
  CHECK(r.code == 0);
  CHECK(slurp(dir / "rebuilt.json") == slurp(run_dir / "report.json"));

  CliResult to_stdout = run_cli("report --events " + (run_dir / "events.jsonl").string(), dir);
  CHECK(to_stdout.code == 0);
  CHECK(to_stdout.out == slurp(run_dir / "report.json"));
}
