#include "colosim/log.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace colosim {

namespace {

using nlohmann::ordered_json;

struct KindName {
  LogKind kind;
  const char* name;
};

constexpr std::array<KindName, 27> kKindNames{{
    {LogKind::kRunMeta, "run_meta"},
    {LogKind::kArrival, "arrival"},
    {LogKind::kPrefillStart, "prefill_start"},
    {LogKind::kPrefillEnd, "prefill_end"},
    {LogKind::kFirstToken, "first_token"},
    {LogKind::kDone, "done"},
    {LogKind::kSnapshot, "snapshot"},
    {LogKind::kBusy, "busy"},
    {LogKind::kDisableIssued, "disable_issued"},
    {LogKind::kDisabled, "disabled"},
    {LogKind::kEnableIssued, "enable_issued"},
    {LogKind::kEnabled, "enabled"},
    {LogKind::kCooldownScheduled, "cooldown_scheduled"},
    {LogKind::kCooldownCancelled, "cooldown_cancelled"},
    {LogKind::kPreemptWait, "preempt_wait"},
    {LogKind::kOnlineDelay, "online_delay"},
    {LogKind::kReclaimRequest, "reclaim_request"},
    {LogKind::kReclaimDone, "reclaim_done"},
    {LogKind::kInvalidation, "invalidation"},
    {LogKind::kEvicted, "evicted"},
    {LogKind::kKilled, "killed"},
    {LogKind::kPressure, "pressure"},
    {LogKind::kReserveChange, "reserve_change"},
    {LogKind::kIntervalChange, "interval_change"},
    {LogKind::kStaticLimit, "static_limit"},
    {LogKind::kFault, "fault"},
    {LogKind::kStall, "stall"},
}};

std::string u64_hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_u64_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

}  // namespace

const char* to_string(LogKind k) {
  for (const KindName& kn : kKindNames) {
    if (kn.kind == k) return kn.name;
  }
  return "?";
}

void write_log_jsonl(std::ostream& out, const std::vector<LogRecord>& log) {
  for (const LogRecord& r : log) {
    ordered_json j;
    j["time_us"] = r.t;
    j["seq"] = r.seq;
    j["kind"] = to_string(r.kind);
    switch (r.kind) {
      case LogKind::kRunMeta:
        j["scenario"] = r.s;
        j["preset"] = r.s2;
        j["seed"] = r.u0;
        j["gpus"] = r.i0;
        j["horizon_us"] = r.i1;
        j["online_fingerprint"] = u64_hex(r.u1);
        j["offline_fingerprint"] = u64_hex(r.u2);
        break;
      case LogKind::kArrival:
        j["class"] = to_string(r.cls);
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        j["prompt_tokens"] = r.i0;
        j["output_tokens"] = r.i1;
        break;
      case LogKind::kPrefillStart:
        j["class"] = to_string(r.cls);
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        j["tokens"] = r.i0;
        break;
      case LogKind::kPrefillEnd:
        j["class"] = to_string(r.cls);
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        break;
      case LogKind::kFirstToken:
        j["class"] = to_string(r.cls);
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        break;
      case LogKind::kDone:
        j["class"] = to_string(r.cls);
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        j["tokens"] = r.i0;
        j["first_token_us"] = r.i1;
        j["last_token_us"] = r.i2;
        j["digest"] = u64_hex(r.u0);
        break;
      case LogKind::kSnapshot:
        j["class"] = to_string(r.cls);
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        j["tokens"] = r.i0;
        j["first_token_us"] = r.i1;
        j["last_token_us"] = r.i2;
        j["state"] = r.s;
        break;
      case LogKind::kBusy:
        j["gpu"] = r.gpu;
        j["class"] = to_string(r.cls);
        j["start_us"] = r.i0;
        j["end_us"] = r.i1;
        break;
      case LogKind::kDisableIssued:
        j["effective_us"] = r.i0;
        j["cause"] = r.s;
        break;
      case LogKind::kDisabled:
      case LogKind::kEnabled:
      case LogKind::kCooldownCancelled:
        break;
      case LogKind::kEnableIssued:
        j["effective_us"] = r.i0;
        break;
      case LogKind::kCooldownScheduled:
        j["expiry_us"] = r.i0;
        break;
      case LogKind::kPreemptWait:
        j["gpu"] = r.gpu;
        j["request_id"] = r.req;
        j["delay_us"] = r.i0;
        break;
      case LogKind::kOnlineDelay:
        j["gpu"] = r.gpu;
        j["request_id"] = r.req;
        j["delay_us"] = r.i0;
        j["reason"] = r.s;
        break;
      case LogKind::kReclaimRequest:
        j["gpu"] = r.gpu;
        j["handles"] = r.i0;
        j["op"] = r.i1;
        j["purpose"] = r.s;
        break;
      case LogKind::kReclaimDone:
        j["gpu"] = r.gpu;
        j["op"] = r.i0;
        j["latency_us"] = r.i1;
        j["handle_ids"] = r.ids;
        break;
      case LogKind::kInvalidation:
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        j["invalidated_page_ids"] = r.ids;
        break;
      case LogKind::kEvicted:
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        j["recompute_tokens"] = r.i0;
        break;
      case LogKind::kKilled:
        j["request_id"] = r.req;
        j["gpu"] = r.gpu;
        j["lost_tokens"] = r.i0;
        break;
      case LogKind::kPressure:
        j["gpu"] = r.gpu;
        j["used_pages"] = r.i0;
        j["capacity_pages"] = r.i1;
        break;
      case LogKind::kReserveChange:
        j["gpu"] = r.gpu;
        j["old_handles"] = r.i0;
        j["new_handles"] = r.i1;
        j["cause"] = r.s;
        break;
      case LogKind::kIntervalChange:
        j["gpu"] = r.gpu;
        j["old_us"] = r.i0;
        j["new_us"] = r.i1;
        break;
      case LogKind::kStaticLimit:
        j["gpu"] = r.gpu;
        j["handles"] = r.i0;
        break;
      case LogKind::kFault:
        j["gpu"] = r.gpu;
        j["request_id"] = r.req;
        j["page_ids"] = r.ids;
        break;
      case LogKind::kStall:
        j["gpu"] = r.gpu;
        j["class"] = to_string(r.cls);
        j["reason"] = r.s;
        break;
    }
    out << j.dump() << '\n';
  }
}

std::vector<LogRecord> read_log_jsonl(std::istream& in, const std::string& name) {
  std::vector<LogRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(where + ": invalid JSON");
    LogRecord r;
    try {
      r.t = j.at("time_us").get<SimTime>();
      r.seq = j.at("seq").get<std::int64_t>();
      const std::string kind = j.at("kind").get<std::string>();
      bool found = false;
      for (const KindName& kn : kKindNames) {
        if (kind == kn.name) {
          r.kind = kn.kind;
          found = true;
          break;
        }
      }
      if (!found) throw std::runtime_error("unknown kind \"" + kind + "\"");
      auto cls = [&](const ordered_json& jj) {
        r.has_cls = true;
        r.cls = jj.get<std::string>() == "online" ? RequestClass::kOnline : RequestClass::kOffline;
      };
      switch (r.kind) {
        case LogKind::kRunMeta:
          r.s = j.at("scenario").get<std::string>();
          r.s2 = j.at("preset").get<std::string>();
          r.u0 = j.at("seed").get<std::uint64_t>();
          r.i0 = j.at("gpus").get<std::int64_t>();
          r.i1 = j.at("horizon_us").get<std::int64_t>();
          r.u1 = parse_u64_hex(j.at("online_fingerprint").get<std::string>());
          r.u2 = parse_u64_hex(j.at("offline_fingerprint").get<std::string>());
          break;
        case LogKind::kArrival:
          cls(j.at("class"));
          r.req = j.at("request_id").get<std::int64_t>();
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("prompt_tokens").get<std::int64_t>();
          r.i1 = j.at("output_tokens").get<std::int64_t>();
          break;
        case LogKind::kPrefillStart:
          cls(j.at("class"));
          r.req = j.at("request_id").get<std::int64_t>();
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("tokens").get<std::int64_t>();
          break;
        case LogKind::kPrefillEnd:
        case LogKind::kFirstToken:
          cls(j.at("class"));
          r.req = j.at("request_id").get<std::int64_t>();
          r.gpu = j.at("gpu").get<std::int32_t>();
          break;
        case LogKind::kDone:
          cls(j.at("class"));
          r.req = j.at("request_id").get<std::int64_t>();
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("tokens").get<std::int64_t>();
          r.i1 = j.at("first_token_us").get<std::int64_t>();
          r.i2 = j.at("last_token_us").get<std::int64_t>();
          r.u0 = parse_u64_hex(j.at("digest").get<std::string>());
          break;
        case LogKind::kSnapshot:
          cls(j.at("class"));
          r.req = j.at("request_id").get<std::int64_t>();
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("tokens").get<std::int64_t>();
          r.i1 = j.at("first_token_us").get<std::int64_t>();
          r.i2 = j.at("last_token_us").get<std::int64_t>();
          r.s = j.at("state").get<std::string>();
          break;
        case LogKind::kBusy:
          r.gpu = j.at("gpu").get<std::int32_t>();
          cls(j.at("class"));
          r.i0 = j.at("start_us").get<std::int64_t>();
          r.i1 = j.at("end_us").get<std::int64_t>();
          break;
        case LogKind::kDisableIssued:
          r.i0 = j.at("effective_us").get<std::int64_t>();
          r.s = j.at("cause").get<std::string>();
          break;
        case LogKind::kDisabled:
        case LogKind::kEnabled:
        case LogKind::kCooldownCancelled:
          break;
        case LogKind::kEnableIssued:
          r.i0 = j.at("effective_us").get<std::int64_t>();
          break;
        case LogKind::kCooldownScheduled:
          r.i0 = j.at("expiry_us").get<std::int64_t>();
          break;
        case LogKind::kPreemptWait:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.req = j.at("request_id").get<std::int64_t>();
          r.i0 = j.at("delay_us").get<std::int64_t>();
          break;
        case LogKind::kOnlineDelay:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.req = j.at("request_id").get<std::int64_t>();
          r.i0 = j.at("delay_us").get<std::int64_t>();
          r.s = j.at("reason").get<std::string>();
          break;
        case LogKind::kReclaimRequest:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("handles").get<std::int64_t>();
          r.i1 = j.at("op").get<std::int64_t>();
          r.s = j.at("purpose").get<std::string>();
          break;
        case LogKind::kReclaimDone:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("op").get<std::int64_t>();
          r.i1 = j.at("latency_us").get<std::int64_t>();
          r.ids = j.at("handle_ids").get<std::vector<std::int64_t>>();
          break;
        case LogKind::kInvalidation:
          r.req = j.at("request_id").get<std::int64_t>();
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.ids = j.at("invalidated_page_ids").get<std::vector<std::int64_t>>();
          break;
        case LogKind::kEvicted:
          r.req = j.at("request_id").get<std::int64_t>();
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("recompute_tokens").get<std::int64_t>();
          break;
        case LogKind::kKilled:
          r.req = j.at("request_id").get<std::int64_t>();
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("lost_tokens").get<std::int64_t>();
          break;
        case LogKind::kPressure:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("used_pages").get<std::int64_t>();
          r.i1 = j.at("capacity_pages").get<std::int64_t>();
          break;
        case LogKind::kReserveChange:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("old_handles").get<std::int64_t>();
          r.i1 = j.at("new_handles").get<std::int64_t>();
          r.s = j.at("cause").get<std::string>();
          break;
        case LogKind::kIntervalChange:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("old_us").get<std::int64_t>();
          r.i1 = j.at("new_us").get<std::int64_t>();
          break;
        case LogKind::kStaticLimit:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.i0 = j.at("handles").get<std::int64_t>();
          break;
        case LogKind::kFault:
          r.gpu = j.at("gpu").get<std::int32_t>();
          r.req = j.at("request_id").get<std::int64_t>();
          r.ids = j.at("page_ids").get<std::vector<std::int64_t>>();
          break;
        case LogKind::kStall:
          r.gpu = j.at("gpu").get<std::int32_t>();
          cls(j.at("class"));
          r.s = j.at("reason").get<std::string>();
          break;
      }
    } catch (const ordered_json::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LogRecord> read_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log file: " + path);
  return read_log_jsonl(in, path);
}

}  // namespace colosim
