#include "colosim/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "colosim/rng.hpp"
#include "json.hpp"

namespace colosim {

namespace {

using nlohmann::json;

TraceRecord parse_record(const json& j, const std::string& where) {
  TraceRecord r;
  try {
    r.arrival_us = j.at("arrival_us").get<SimTime>();
    const std::string cls = j.at("class").get<std::string>();
    if (cls == "online") {
      r.cls = RequestClass::kOnline;
    } else if (cls == "offline") {
      r.cls = RequestClass::kOffline;
    } else {
      throw std::runtime_error("class must be \"online\" or \"offline\", got \"" + cls + "\"");
    }
    r.prompt_tokens = j.at("prompt_tokens").get<int>();
    r.output_tokens = j.at("output_tokens").get<int>();
    r.stream_id = j.at("stream_id").get<std::string>();
  } catch (const json::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  if (r.arrival_us < 0) throw std::runtime_error(where + ": arrival_us must be >= 0");
  if (r.prompt_tokens < 0 || r.output_tokens < 0)
    throw std::runtime_error(where + ": token counts must be >= 0");
  return r;
}

}  // namespace

std::vector<TraceRecord> load_trace(std::istream& in, const std::string& name) {
  std::vector<TraceRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(where + ": invalid JSON");
    out.push_back(parse_record(j, where));
  }
  std::stable_sort(out.begin(), out.end(), [](const TraceRecord& a, const TraceRecord& b) {
    return a.arrival_us < b.arrival_us;
  });
  return out;
}

std::vector<TraceRecord> load_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  return load_trace(in, path);
}

void save_trace(std::ostream& out, const std::vector<TraceRecord>& records) {
  for (const TraceRecord& r : records) {
    nlohmann::ordered_json j;
    j["arrival_us"] = r.arrival_us;
    j["class"] = to_string(r.cls);
    j["prompt_tokens"] = r.prompt_tokens;
    j["output_tokens"] = r.output_tokens;
    j["stream_id"] = r.stream_id;
    out << j.dump() << '\n';
  }
}

void save_trace_file(const std::string& path, const std::vector<TraceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  save_trace(out, records);
}

std::uint64_t trace_fingerprint(const std::vector<TraceRecord>& records) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (const TraceRecord& r : records) {
    h = hash_mix(h, static_cast<std::uint64_t>(r.arrival_us));
    h = hash_mix(h, r.cls == RequestClass::kOnline ? 1 : 2);
    h = hash_mix(h, static_cast<std::uint64_t>(r.prompt_tokens));
    h = hash_mix(h, static_cast<std::uint64_t>(r.output_tokens));
    h = hash_mix(h, hash_str(r.stream_id));
  }
  return h;
}

namespace {

void draw_tokens(const GeneratorSpec& spec, Rng& tok_rng, TraceRecord& r) {
  r.prompt_tokens = static_cast<int>(tok_rng.uniform_int(spec.prompt_tokens.first, spec.prompt_tokens.second));
  r.output_tokens = static_cast<int>(tok_rng.uniform_int(spec.output_tokens.first, spec.output_tokens.second));
}

void check_token_ranges(const GeneratorSpec& spec) {
  if (spec.prompt_tokens.first < 0 || spec.prompt_tokens.second < spec.prompt_tokens.first)
    throw std::invalid_argument("gen_trace: bad prompt_tokens range");
  if (spec.output_tokens.first < 0 || spec.output_tokens.second < spec.output_tokens.first)
    throw std::invalid_argument("gen_trace: bad output_tokens range");
}

// Piecewise-constant-rate arrivals over [0, horizon). Exponential inter-arrival
// sampling restarts at segment boundaries; exact for memoryless arrivals.
std::vector<SimTime> piecewise_poisson(Rng& rng, SimTime horizon,
                                       const std::vector<std::pair<Interval, double>>& segments) {
  std::vector<SimTime> arrivals;
  for (const auto& [iv, rate] : segments) {
    if (rate == 0.0) continue;
    double t = static_cast<double>(iv.start);
    for (;;) {
      t += rng.exponential(rate) * static_cast<double>(us_per_s);
      if (t >= static_cast<double>(std::min(iv.end, horizon))) break;
      arrivals.push_back(static_cast<SimTime>(t));
    }
  }
  return arrivals;
}

}  // namespace

std::vector<TraceRecord> gen_trace(const GeneratorSpec& spec, std::uint64_t seed, SimTime horizon_us) {
  if (horizon_us < 0) throw std::invalid_argument("gen_trace: horizon must be >= 0");
  check_token_ranges(spec);
  Rng arr_rng = Rng::substream(seed, "arrivals:" + spec.stream_id);
  Rng tok_rng = Rng::substream(seed, "tokens:" + spec.stream_id);

  std::vector<SimTime> arrivals;
  switch (spec.pattern) {
    case GeneratorSpec::Pattern::kPoisson: {
      if (spec.rate_per_s < 0) throw std::invalid_argument("gen_trace: poisson rate must be >= 0");
      arrivals = piecewise_poisson(arr_rng, horizon_us, {{{0, horizon_us}, spec.rate_per_s}});
      break;
    }
    case GeneratorSpec::Pattern::kSpike: {
      if (spec.base_rate_per_s < 0 || spec.spike_rate_per_s < 0)
        throw std::invalid_argument("gen_trace: spike rates must be >= 0");
      if (spec.spike_period_us <= 0) throw std::invalid_argument("gen_trace: spike_period_us must be > 0");
      if (spec.spike_width_us <= 0 || spec.spike_width_us > spec.spike_period_us)
        throw std::invalid_argument("gen_trace: spike_width_us must be in (0, spike_period_us]");
      std::vector<std::pair<Interval, double>> segments;
      for (SimTime p = 0; p < horizon_us; p += spec.spike_period_us) {
        segments.push_back({{p, std::min(p + spec.spike_width_us, horizon_us)}, spec.spike_rate_per_s});
        if (p + spec.spike_width_us < horizon_us) {
          segments.push_back(
              {{p + spec.spike_width_us, std::min(p + spec.spike_period_us, horizon_us)}, spec.base_rate_per_s});
        }
      }
      arrivals = piecewise_poisson(arr_rng, horizon_us, segments);
      std::sort(arrivals.begin(), arrivals.end());
      break;
    }
    case GeneratorSpec::Pattern::kBatch: {
      if (spec.batch_size <= 0) throw std::invalid_argument("gen_trace: batch_size must be > 0");
      if (spec.batch_period_us <= 0) throw std::invalid_argument("gen_trace: batch_period_us must be > 0");
      for (SimTime t = 0; t < horizon_us; t += spec.batch_period_us) {
        for (int i = 0; i < spec.batch_size; ++i) arrivals.push_back(t);
      }
      break;
    }
  }

  std::vector<TraceRecord> out;
  out.reserve(arrivals.size());
  for (SimTime t : arrivals) {
    TraceRecord r;
    r.arrival_us = t;
    r.cls = spec.cls;
    r.stream_id = spec.stream_id;
    draw_tokens(spec, tok_rng, r);
    out.push_back(std::move(r));
  }
  return out;
}

double coefficient_of_variation(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("coefficient_of_variation: empty series");
  double sum = 0.0;
  for (double s : samples) sum += s;
  const double mean = sum / static_cast<double>(samples.size());
  if (mean == 0.0) throw std::invalid_argument("coefficient_of_variation: zero mean");
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(samples.size());
  return std::sqrt(var) / mean;
}

double coefficient_of_variation(const UtilizationSeries& series) {
  for (double s : series.samples) {
    if (s < 0.0 || s > 1.0)
      throw std::invalid_argument("UtilizationSeries sample outside [0, 1]");
  }
  return coefficient_of_variation(series.samples);
}

std::vector<double> arrival_counts(const std::vector<TraceRecord>& records, SimTime horizon_us,
                                   SimTime bin_us) {
  if (bin_us <= 0) throw std::invalid_argument("arrival_counts: bin_us must be > 0");
  if (horizon_us <= 0) return {};
  const std::size_t bins = static_cast<std::size_t>((horizon_us + bin_us - 1) / bin_us);
  std::vector<double> counts(bins, 0.0);
  for (const TraceRecord& r : records) {
    if (r.arrival_us < 0 || r.arrival_us >= horizon_us) continue;
    counts[static_cast<std::size_t>(r.arrival_us / bin_us)] += 1.0;
  }
  return counts;
}

GapMeasurement measure_gaps(std::vector<Interval> busy, std::vector<Interval> decode_spans) {
  auto by_start = [](const Interval& a, const Interval& b) { return a.start < b.start; };
  std::sort(busy.begin(), busy.end(), by_start);
  std::sort(decode_spans.begin(), decode_spans.end(), by_start);

  // Merge decode spans; gaps only count inside them.
  std::vector<Interval> spans;
  for (const Interval& d : decode_spans) {
    if (!spans.empty() && d.start <= spans.back().end) {
      spans.back().end = std::max(spans.back().end, d.end);
    } else {
      spans.push_back(d);
    }
  }

  GapMeasurement m;
  for (const Interval& span : spans) {
    SimTime cursor = span.start;
    for (const Interval& b : busy) {
      if (b.end <= cursor) continue;
      if (b.start >= span.end) break;
      if (b.start > cursor) m.gaps.push_back({cursor, std::min(b.start, span.end)});
      cursor = std::max(cursor, b.end);
      if (cursor >= span.end) break;
    }
    if (cursor < span.end) m.gaps.push_back({cursor, span.end});
  }
  for (const Interval& g : m.gaps) m.max_gap_us = std::max(m.max_gap_us, g.end - g.start);
  return m;
}

}  // namespace colosim
