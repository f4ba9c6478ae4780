#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "colosim/time.hpp"
#include "colosim/trace.hpp"

namespace colosim {

// Everything a report needs is recomputable from these records alone.
enum class LogKind : std::uint8_t {
  kRunMeta,            // s=scenario, s2=preset, u0=seed, u1/u2=online/offline fingerprint, i0=gpus, i1=horizon
  kArrival,            // req, cls, gpu, i0=prompt, i1=output
  kPrefillStart,       // req, cls, gpu, i0=tokens being prefilled
  kPrefillEnd,         // req, cls, gpu
  kFirstToken,         // req, cls, gpu (t is the emit time)
  kDone,               // req, cls, gpu, i0=tokens, i1=first_token_us, i2=last_token_us, u0=digest
  kSnapshot,           // unfinished at horizon: req, cls, gpu, i0=tokens, i1=first, i2=last, s=state
  kBusy,               // gpu, cls, i0=start_us, i1=end_us
  kDisableIssued,      // i0=effective_us, s=cause (busy|memory)
  kDisabled,           //
  kEnableIssued,       // i0=effective_us
  kEnabled,            //
  kCooldownScheduled,  // i0=expiry_us
  kCooldownCancelled,  //
  kPreemptWait,        // gpu, req (-1 for decode batch), i0=delay_us
  kOnlineDelay,        // gpu, req, i0=delay_us, s=reason (drain|reclaim|migration)
  kReclaimRequest,     // gpu, i0=k, i1=op id, s=purpose (shortfall|growth|uvm)
  kReclaimDone,        // gpu, i0=op id, i1=latency_us, ids=handles
  kInvalidation,       // req, gpu, ids=invalidated page ids
  kEvicted,            // req, gpu, i0=recompute cost tokens
  kKilled,             // req, gpu, i0=lost tokens (input + generated)
  kPressure,           // gpu, i0=used_pages, i1=capacity_pages
  kReserveChange,      // gpu, i0=old handles, i1=new handles, s=cause (pressure|release)
  kIntervalChange,     // gpu, i0=old us, i1=new us
  kStaticLimit,        // gpu, i0=offline handle budget
  kFault,              // gpu, req, ids=pages touched while reclaimed
  kStall,              // gpu, cls, s=reason
};

struct LogRecord {
  SimTime t = 0;
  std::int64_t seq = 0;
  LogKind kind = LogKind::kRunMeta;
  std::int32_t gpu = -1;
  RequestClass cls = RequestClass::kOnline;
  bool has_cls = false;
  std::int64_t req = -1;
  std::int64_t i0 = 0, i1 = 0, i2 = 0;
  std::uint64_t u0 = 0, u1 = 0, u2 = 0;
  std::vector<std::int64_t> ids;
  std::string s, s2;

  bool operator==(const LogRecord&) const = default;
};

const char* to_string(LogKind k);

void write_log_jsonl(std::ostream& out, const std::vector<LogRecord>& log);
std::vector<LogRecord> read_log_jsonl(std::istream& in, const std::string& name = "<stream>");
std::vector<LogRecord> read_log_file(const std::string& path);

}  // namespace colosim
