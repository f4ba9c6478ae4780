#include "colosim/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "colosim/rng.hpp"
#include "json.hpp"

namespace colosim {

using nlohmann::json;

SimTime GapModel::max_us() const {
  switch (kind) {
    case Kind::kNone: return 0;
    case Kind::kConstant: return gap_us;
    case Kind::kSchedule: {
      SimTime m = 0;
      for (SimTime g : schedule_us) m = std::max(m, g);
      return m;
    }
    case Kind::kUniform: return hi_us;
  }
  return 0;
}

SimTime GapModel::sample(std::uint64_t seed, std::int64_t request_id, int token_idx) const {
  switch (kind) {
    case Kind::kNone: return 0;
    case Kind::kConstant: return gap_us;
    case Kind::kSchedule:
      if (schedule_us.empty()) return 0;
      return schedule_us[static_cast<std::size_t>(token_idx) % schedule_us.size()];
    case Kind::kUniform:
      return keyed_uniform_int(seed, static_cast<std::uint64_t>(request_id) ^ 0x67617073ULL,
                               static_cast<std::uint64_t>(token_idx), lo_us, hi_us);
  }
  return 0;
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw std::runtime_error("scenario: field \"" + field + "\" " + why);
}

void expect_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail(where.empty() ? key : where + "." + key, "is not a recognized field");
  }
}

std::pair<int, int> token_range(const json& j, const std::string& field) {
  std::pair<int, int> range;
  if (j.is_number_integer()) {
    range = {j.get<int>(), j.get<int>()};
  } else if (j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer()) {
    range = {j[0].get<int>(), j[1].get<int>()};
  } else {
    fail(field, "must be an integer or [lo, hi] pair");
  }
  if (range.first < 0 || range.second < range.first) fail(field, "must satisfy 0 <= lo <= hi");
  return range;
}

GeneratorSpec generator_from_json(const json& j, const std::string& where) {
  expect_keys(j, where,
              {"pattern", "class", "rate_per_s", "base_rate_per_s", "spike_rate_per_s", "spike_period_us",
               "spike_width_us", "batch_size", "batch_period_us", "prompt_tokens", "output_tokens",
               "stream_id"});
  GeneratorSpec g;
  const std::string pattern = j.value("pattern", "");
  if (pattern == "poisson") {
    g.pattern = GeneratorSpec::Pattern::kPoisson;
    if (!j.contains("rate_per_s")) fail(where + ".rate_per_s", "is required for poisson");
    g.rate_per_s = j.at("rate_per_s").get<double>();
  } else if (pattern == "spike") {
    g.pattern = GeneratorSpec::Pattern::kSpike;
    for (const char* k : {"base_rate_per_s", "spike_rate_per_s", "spike_period_us", "spike_width_us"}) {
      if (!j.contains(k)) fail(where + "." + k, "is required for spike");
    }
    g.base_rate_per_s = j.at("base_rate_per_s").get<double>();
    g.spike_rate_per_s = j.at("spike_rate_per_s").get<double>();
    g.spike_period_us = j.at("spike_period_us").get<SimTime>();
    g.spike_width_us = j.at("spike_width_us").get<SimTime>();
  } else if (pattern == "batch") {
    g.pattern = GeneratorSpec::Pattern::kBatch;
    for (const char* k : {"batch_size", "batch_period_us"}) {
      if (!j.contains(k)) fail(where + "." + k, "is required for batch");
    }
    g.batch_size = j.at("batch_size").get<int>();
    g.batch_period_us = j.at("batch_period_us").get<SimTime>();
  } else {
    fail(where + ".pattern", "must be one of poisson|spike|batch");
  }
  if (j.contains("class")) {
    const std::string cls = j.at("class").get<std::string>();
    if (cls == "online") g.cls = RequestClass::kOnline;
    else if (cls == "offline") g.cls = RequestClass::kOffline;
    else fail(where + ".class", "must be online|offline");
  }
  if (j.contains("prompt_tokens")) g.prompt_tokens = token_range(j.at("prompt_tokens"), where + ".prompt_tokens");
  if (j.contains("output_tokens")) g.output_tokens = token_range(j.at("output_tokens"), where + ".output_tokens");
  g.stream_id = j.value("stream_id", g.stream_id);
  return g;
}

GapModel gap_from_json(const json& j, const std::string& where) {
  expect_keys(j, where, {"type", "gap_us", "gaps_us", "lo_us", "hi_us"});
  GapModel g;
  const std::string type = j.value("type", "none");
  if (type == "none") {
    g.kind = GapModel::Kind::kNone;
  } else if (type == "constant") {
    g.kind = GapModel::Kind::kConstant;
    g.gap_us = j.value("gap_us", SimTime{0});
    if (g.gap_us < 0) fail(where + ".gap_us", "must be >= 0");
  } else if (type == "schedule") {
    g.kind = GapModel::Kind::kSchedule;
    if (!j.contains("gaps_us") || !j.at("gaps_us").is_array()) fail(where + ".gaps_us", "must be an array");
    for (const auto& v : j.at("gaps_us")) {
      const SimTime gv = v.get<SimTime>();
      if (gv < 0) fail(where + ".gaps_us", "entries must be >= 0");
      g.schedule_us.push_back(gv);
    }
  } else if (type == "uniform") {
    g.kind = GapModel::Kind::kUniform;
    g.lo_us = j.value("lo_us", SimTime{0});
    g.hi_us = j.value("hi_us", SimTime{0});
    if (g.lo_us < 0 || g.hi_us < g.lo_us) fail(where, "must satisfy 0 <= lo_us <= hi_us");
  } else {
    fail(where + ".type", "must be one of none|constant|schedule|uniform");
  }
  return g;
}

ReservationParams reservation_from_json(const json& j, const std::string& where) {
  expect_keys(j, where,
              {"alpha", "beta", "t_init_us", "delta_us", "t_min_us", "t_max_us", "window_us",
               "target_per_window", "h_min", "pressure_threshold"});
  ReservationParams r;
  r.alpha = j.value("alpha", r.alpha);
  r.beta = j.value("beta", r.beta);
  r.t_init_us = j.value("t_init_us", r.t_init_us);
  r.delta_us = j.value("delta_us", r.delta_us);
  r.t_min_us = j.value("t_min_us", r.t_min_us);
  r.t_max_us = j.value("t_max_us", r.t_max_us);
  r.window_us = j.value("window_us", r.window_us);
  r.target_per_window = j.value("target_per_window", r.target_per_window);
  r.h_min = j.value("h_min", r.h_min);
  r.pressure_threshold = j.value("pressure_threshold", r.pressure_threshold);
  if (r.alpha <= 1.0) fail(where + ".alpha", "must be > 1");
  if (r.beta <= 1.0) fail(where + ".beta", "must be > 1");
  if (r.t_init_us <= 0) fail(where + ".t_init_us", "must be > 0");
  if (r.t_min_us <= 0 || r.t_max_us < r.t_min_us) fail(where + ".t_min_us", "must satisfy 0 < t_min <= t_max");
  if (r.window_us <= 0) fail(where + ".window_us", "must be > 0");
  if (r.h_min < 0) fail(where + ".h_min", "must be >= 0");
  if (r.pressure_threshold <= 0.0 || r.pressure_threshold > 1.0)
    fail(where + ".pressure_threshold", "must be in (0, 1]");
  return r;
}

SimParams params_from_json(const json& j) {
  expect_keys(j, "params",
              {"prefill_us_per_token", "decode_iter_us", "toggle_latency_us", "driver_patched",
               "gpreempt_latency_us", "g_us", "measured_g_us", "gap", "total_handles",
               "handle_size_pages", "page_size_tokens", "remap_cost_us", "initial_reserve_fraction",
               "uvm_page_penalty_us", "static_window_frac", "max_offline_batch", "reservation",
               "unsafe_skip_compute_gate"});
  SimParams p;
  p.prefill_us_per_token = j.value("prefill_us_per_token", p.prefill_us_per_token);
  p.decode_iter_us = j.value("decode_iter_us", p.decode_iter_us);
  p.toggle_latency_us = j.value("toggle_latency_us", p.toggle_latency_us);
  p.driver_patched = j.value("driver_patched", p.driver_patched);
  p.gpreempt_latency_us = j.value("gpreempt_latency_us", p.gpreempt_latency_us);
  if (j.contains("g_us")) p.g_us = j.at("g_us").get<SimTime>();
  if (j.contains("measured_g_us")) p.measured_g_us = j.at("measured_g_us").get<SimTime>();
  if (j.contains("gap")) p.gap = gap_from_json(j.at("gap"), "params.gap");
  p.total_handles = j.value("total_handles", p.total_handles);
  p.handle_size_pages = j.value("handle_size_pages", p.handle_size_pages);
  p.page_size_tokens = j.value("page_size_tokens", p.page_size_tokens);
  p.remap_cost_us = j.value("remap_cost_us", p.remap_cost_us);
  p.initial_reserve_fraction = j.value("initial_reserve_fraction", p.initial_reserve_fraction);
  p.uvm_page_penalty_us = j.value("uvm_page_penalty_us", p.uvm_page_penalty_us);
  p.static_window_frac = j.value("static_window_frac", p.static_window_frac);
  p.max_offline_batch = j.value("max_offline_batch", p.max_offline_batch);
  if (j.contains("reservation")) p.reservation = reservation_from_json(j.at("reservation"), "params.reservation");
  p.unsafe_skip_compute_gate = j.value("unsafe_skip_compute_gate", p.unsafe_skip_compute_gate);

  if (p.prefill_us_per_token <= 0) fail("params.prefill_us_per_token", "must be > 0");
  if (p.decode_iter_us <= 0) fail("params.decode_iter_us", "must be > 0");
  if (p.toggle_latency_us < 0) fail("params.toggle_latency_us", "must be >= 0");
  if (p.gpreempt_latency_us < 0) fail("params.gpreempt_latency_us", "must be >= 0");
  if (p.g_us && *p.g_us < 0) fail("params.g_us", "must be >= 0");
  if (p.measured_g_us && *p.measured_g_us < 0) fail("params.measured_g_us", "must be >= 0");
  if (p.total_handles <= 0) fail("params.total_handles", "must be > 0");
  if (p.handle_size_pages <= 0) fail("params.handle_size_pages", "must be > 0");
  if (p.page_size_tokens <= 0) fail("params.page_size_tokens", "must be > 0");
  if (p.remap_cost_us < 0) fail("params.remap_cost_us", "must be >= 0");
  if (p.initial_reserve_fraction < 0.0 || p.initial_reserve_fraction > 1.0)
    fail("params.initial_reserve_fraction", "must be in [0, 1]");
  if (p.uvm_page_penalty_us < 0) fail("params.uvm_page_penalty_us", "must be >= 0");
  if (p.static_window_frac < 0.0 || p.static_window_frac > 1.0)
    fail("params.static_window_frac", "must be in [0, 1]");
  if (p.max_offline_batch <= 0) fail("params.max_offline_batch", "must be > 0");
  return p;
}

std::vector<StreamSpec> streams_from_json(const json& j, const std::string& where, RequestClass cls) {
  std::vector<StreamSpec> out;
  auto one = [&](const json& sj, const std::string& w) {
    expect_keys(sj, w, {"path", "generator"});
    StreamSpec s;
    if (sj.contains("path") == sj.contains("generator"))
      fail(w, "must have exactly one of \"path\" or \"generator\"");
    if (sj.contains("path")) {
      s.path = sj.at("path").get<std::string>();
    } else {
      s.gen = generator_from_json(sj.at("generator"), w + ".generator");
      s.gen->cls = cls;
    }
    out.push_back(std::move(s));
  };
  if (j.is_array()) {
    int i = 0;
    for (const auto& sj : j) one(sj, where + "[" + std::to_string(i++) + "]");
  } else if (j.is_object()) {
    one(j, where);
  } else {
    fail(where, "must be a stream object or array of streams");
  }
  return out;
}

Scenario scenario_from_json(const json& j, const std::string& name_hint) {
  expect_keys(j, "", {"name", "gpus", "horizon_us", "seed", "preset", "online", "offline", "params"});
  Scenario sc;
  sc.name = j.value("name", name_hint);
  if (sc.name.empty()) fail("name", "is required");
  sc.gpus = j.value("gpus", 1);
  if (sc.gpus <= 0) fail("gpus", "must be > 0");
  if (!j.contains("horizon_us")) fail("horizon_us", "is required");
  sc.horizon_us = j.at("horizon_us").get<SimTime>();
  if (sc.horizon_us < 0) fail("horizon_us", "must be >= 0");
  sc.seed = j.value("seed", std::uint64_t{0});
  sc.preset = j.value("preset", std::string("valve"));
  auto pol = parse_preset(sc.preset);
  if (!pol) fail("preset", "is not a known preset");
  sc.policy = *pol;
  if (j.contains("online")) sc.online = streams_from_json(j.at("online"), "online", RequestClass::kOnline);
  if (j.contains("offline")) sc.offline = streams_from_json(j.at("offline"), "offline", RequestClass::kOffline);
  if (j.contains("params")) sc.params = params_from_json(j.at("params"));
  return sc;
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text, const std::string& name_hint) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("scenario: invalid JSON");
  return scenario_from_json(j, name_hint);
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string name_hint = path;
  if (auto slash = name_hint.find_last_of('/'); slash != std::string::npos)
    name_hint = name_hint.substr(slash + 1);
  if (name_hint.size() > 5 && name_hint.ends_with(".json")) name_hint.resize(name_hint.size() - 5);
  return scenario_from_json_text(ss.str(), name_hint);
}

GeneratorSpec generator_from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("generator: invalid JSON");
  return generator_from_json(j, "generator");
}

BuiltTraces build_traces(const Scenario& sc) {
  BuiltTraces out;
  std::vector<TraceRecord> online, offline;
  for (const StreamSpec& s : sc.online) {
    std::vector<TraceRecord> part =
        s.gen ? gen_trace(*s.gen, sc.seed, sc.horizon_us) : load_trace_file(s.path);
    for (TraceRecord& r : part) r.cls = RequestClass::kOnline;
    online.insert(online.end(), part.begin(), part.end());
  }
  if (!sc.policy.standalone) {
    for (const StreamSpec& s : sc.offline) {
      std::vector<TraceRecord> part =
          s.gen ? gen_trace(*s.gen, sc.seed, sc.horizon_us) : load_trace_file(s.path);
      for (TraceRecord& r : part) r.cls = RequestClass::kOffline;
      offline.insert(offline.end(), part.begin(), part.end());
    }
  }
  auto by_arrival = [](const TraceRecord& a, const TraceRecord& b) { return a.arrival_us < b.arrival_us; };
  std::stable_sort(online.begin(), online.end(), by_arrival);
  std::stable_sort(offline.begin(), offline.end(), by_arrival);
  out.online_fingerprint = trace_fingerprint(online);
  out.offline_fingerprint = trace_fingerprint(offline);
  out.merged.reserve(online.size() + offline.size());
  std::merge(online.begin(), online.end(), offline.begin(), offline.end(),
             std::back_inserter(out.merged), by_arrival);
  return out;
}

Scenario with_preset(Scenario sc, const std::string& preset) {
  auto pol = parse_preset(preset);
  if (!pol) throw std::runtime_error("unknown preset: " + preset);
  sc.preset = preset;
  sc.policy = *pol;
  return sc;
}

}  // namespace colosim
