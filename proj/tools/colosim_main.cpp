// Command-line front end: run scenarios, compare policy presets, generate
// traces, score cluster placements, and rebuild reports from event logs.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "colosim/cluster.hpp"
#include "colosim/metrics.hpp"
#include "colosim/policies.hpp"
#include "colosim/scenario.hpp"
#include "colosim/sim.hpp"
#include "colosim/trace.hpp"

namespace fs = std::filesystem;
using namespace colosim;

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

std::string preset_list() {
  std::string s;
  for (const std::string& n : preset_names()) {
    if (!s.empty()) s += ", ";
    s += n;
  }
  return s;
}

// Runs one scenario and persists <out>/<scenario>/<preset>/<seed>/{events.jsonl,report.json}.
RunReport run_and_persist(const Scenario& sc, const fs::path& out_root) {
  SimOutput out = run_colocation(sc);
  const fs::path dir = out_root / sc.name / sc.preset / std::to_string(sc.seed);
  fs::create_directories(dir);
  {
    std::ofstream ev(dir / "events.jsonl", std::ios::binary);
    if (!ev) throw std::runtime_error("cannot write file: " + (dir / "events.jsonl").string());
    write_log_jsonl(ev, out.log);
  }
  RunReport report = build_report(out.log);
  write_text_file(dir / "report.json", report_json(report));
  return report;
}

void append_csv(const fs::path& out_root, const std::string& row) {
  fs::create_directories(out_root);
  const fs::path csv = out_root / "metrics.csv";
  const bool fresh = !fs::exists(csv);
  std::ofstream out(csv, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot write file: " + csv.string());
  if (fresh) out << csv_header() << '\n';
  out << row << '\n';
}

int cmd_run(const std::string& scenario_path, const std::string& preset,
            std::optional<std::uint64_t> seed, std::optional<SimTime> horizon,
            const std::string& out_dir) {
  Scenario sc = load_scenario_file(scenario_path);
  if (!preset.empty()) sc = with_preset(sc, preset);
  if (seed) sc.seed = *seed;
  if (horizon) sc.horizon_us = *horizon;
  RunReport r = run_and_persist(sc, out_dir);
  append_csv(out_dir, csv_row(r, std::nullopt, std::nullopt, std::nullopt));
  std::printf("%s/%s seed=%llu: online %lld/%lld done, ttft mean %.1f us, offline %.1f tok/s\n",
              sc.name.c_str(), sc.preset.c_str(), static_cast<unsigned long long>(sc.seed),
              static_cast<long long>(r.online_completed), static_cast<long long>(r.online_requests),
              r.ttft_us.mean, r.offline_tokens_per_s);
  return 0;
}

int cmd_compare(const std::string& scenario_path, std::vector<std::string> presets,
                std::vector<std::uint64_t> seeds, bool standalone_offline,
                const std::string& out_dir) {
  const Scenario base = load_scenario_file(scenario_path);
  if (presets.empty())
    presets = {"kernel+uvm", "gpreempt+uvm", "channel+uvm", "channel+prism", "channel+static", "valve"};
  for (const std::string& p : presets) {
    if (!parse_preset(p) || p == "standalone")
      throw std::runtime_error("unknown preset \"" + p + "\" (choose from: " + preset_list() + ")");
  }
  if (seeds.empty()) seeds.push_back(base.seed);

  std::printf("%-16s %6s %12s %10s %10s %12s %8s %6s %6s %6s\n", "preset", "seed", "ttft_mean_us",
              "ttft_inc%", "tpot_inc%", "off_tok_per_s", "norm_off", "evict", "kill", "fault");
  for (std::uint64_t seed : seeds) {
    Scenario sc = base;
    sc.seed = seed;

    Scenario alone = with_preset(sc, "standalone");
    RunReport ref_alone = run_and_persist(alone, out_dir);
    append_csv(out_dir, csv_row(ref_alone, std::nullopt, std::nullopt, std::nullopt));
    std::printf("%-16s %6llu %12.1f %10s %10s %12.1f %8s %6lld %6lld %6lld\n", "standalone",
                static_cast<unsigned long long>(seed), ref_alone.ttft_us.mean, "-", "-",
                ref_alone.offline_tokens_per_s, "-", 0LL, 0LL, 0LL);

    // channel+prism never reclaims, so it is the offline-throughput reference.
    RunReport ref_prism = run_and_persist(with_preset(sc, "channel+prism"), out_dir);

    std::optional<RunReport> off_alone;
    if (standalone_offline) {
      Scenario off = with_preset(sc, "channel+prism");
      off.online.clear();
      off.preset = "offline-standalone";
      off_alone = run_and_persist(off, out_dir);
    }

    for (const std::string& p : presets) {
      RunReport r = p == "channel+prism" ? ref_prism : run_and_persist(with_preset(sc, p), out_dir);
      const PairedIncrease ttft = ttft_increase(ref_alone, r);
      const PairedIncrease tpot = tpot_increase(ref_alone, r);
      std::optional<double> norm;
      if (ref_prism.offline_tokens_per_s > 0) norm = normalized_offline_throughput(ref_prism, r);
      append_csv(out_dir, csv_row(r, ttft, tpot, norm));
      char norm_buf[32];
      if (norm) std::snprintf(norm_buf, sizeof norm_buf, "%.3f", *norm);
      else std::snprintf(norm_buf, sizeof norm_buf, "-");
      std::printf("%-16s %6llu %12.1f %10.2f %10.2f %12.1f %8s %6lld %6lld %6lld\n", p.c_str(),
                  static_cast<unsigned long long>(seed), r.ttft_us.mean, ttft.mean_pct,
                  tpot.mean_pct, r.offline_tokens_per_s, norm_buf,
                  static_cast<long long>(r.evictions), static_cast<long long>(r.kills),
                  static_cast<long long>(r.faults));
      if (off_alone && off_alone->offline_tokens_per_s > 0) {
        const double gpu_equiv =
            r.offline_tokens_per_s / off_alone->offline_tokens_per_s * base.gpus;
        std::printf("%-16s %6s harvested throughput of %.2f dedicated gpu(s)\n", "", "",
                    gpu_equiv);
      }
    }
    if (off_alone)
      std::printf("offline-standalone %3llu: %.1f tok/s across %d dedicated gpu(s)\n",
                  static_cast<unsigned long long>(seed), off_alone->offline_tokens_per_s, base.gpus);
  }
  return 0;
}

int cmd_gen_trace(const std::string& spec_path, std::uint64_t seed, SimTime horizon,
                  const std::string& out_path) {
  GeneratorSpec gen = generator_from_json_text(read_text_file(spec_path));
  std::vector<TraceRecord> recs = gen_trace(gen, seed, horizon);
  save_trace_file(out_path, recs);
  std::printf("%zu records -> %s\n", recs.size(), out_path.c_str());
  return 0;
}

int cmd_schedule(const std::string& nodes_path, const std::string& jobs_path,
                 const std::string& out_path) {
  std::vector<NodeProfile> nodes = nodes_from_json_text(read_text_file(nodes_path));
  std::vector<JobProfile> jobs = jobs_from_json_text(read_text_file(jobs_path));
  const std::string text = placement_json(place(jobs, nodes));
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
  }
  return 0;
}

int cmd_report(const std::string& events_path, const std::string& out_path) {
  RunReport r = build_report(read_log_file(events_path));
  const std::string text = report_json(r);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPU colocation simulator: online serving with harvested offline compute"};
  app.require_subcommand(1);

  std::string scenario_path, preset, out_dir = "out";
  std::optional<std::uint64_t> seed_override;
  std::optional<SimTime> horizon_override;
  CLI::App* run = app.add_subcommand("run", "simulate one scenario under one preset");
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--preset", preset, "policy preset (default: the scenario's)");
  run->add_option("--seed", seed_override, "override the scenario seed");
  run->add_option("--horizon-us", horizon_override, "override the horizon");
  run->add_option("--out", out_dir, "output directory root");

  std::string cmp_scenario, cmp_out = "out";
  std::vector<std::string> cmp_presets;
  std::vector<std::uint64_t> cmp_seeds;
  bool standalone_offline = false;
  CLI::App* cmp = app.add_subcommand("compare", "run a scenario under several presets side by side");
  cmp->add_option("--scenario", cmp_scenario, "scenario JSON file")->required();
  cmp->add_option("--presets", cmp_presets, "presets to compare (default: all colocated ones)");
  cmp->add_option("--seeds", cmp_seeds, "seeds to sweep (default: the scenario's)");
  cmp->add_flag("--standalone-offline", standalone_offline,
                "also run the offline trace alone for a dedicated-GPU throughput reference");
  cmp->add_option("--out", cmp_out, "output directory root");

  std::string gen_spec, gen_out;
  std::uint64_t gen_seed = 0;
  SimTime gen_horizon = 0;
  CLI::App* gen = app.add_subcommand("gen-trace", "expand a generator spec into a trace file");
  gen->add_option("--spec", gen_spec, "generator JSON file")->required();
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--horizon-us", gen_horizon, "generate arrivals in [0, horizon)")->required();
  gen->add_option("--out", gen_out, "output trace file")->required();

  std::string sch_nodes, sch_jobs, sch_out;
  CLI::App* sch = app.add_subcommand("schedule", "place offline jobs onto profiled nodes");
  sch->add_option("--nodes", sch_nodes, "node profiles JSON file")->required();
  sch->add_option("--jobs", sch_jobs, "job profiles JSON file")->required();
  sch->add_option("--out", sch_out, "placement JSON output (default: stdout)");

  std::string rep_events, rep_out;
  CLI::App* rep = app.add_subcommand("report", "rebuild a report from an event log");
  rep->add_option("--events", rep_events, "events.jsonl file")->required();
  rep->add_option("--out", rep_out, "report JSON output (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, preset, seed_override, horizon_override, out_dir);
    if (cmp->parsed()) return cmd_compare(cmp_scenario, cmp_presets, cmp_seeds, standalone_offline, cmp_out);
    if (gen->parsed()) return cmd_gen_trace(gen_spec, gen_seed, gen_horizon, gen_out);
    if (sch->parsed()) return cmd_schedule(sch_nodes, sch_jobs, sch_out);
    if (rep->parsed()) return cmd_report(rep_events, rep_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (run->parsed() || cmp->parsed()) std::cerr << "presets: " << preset_list() << "\n";
    return 1;
  }
  return 0;
}
