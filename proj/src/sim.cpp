#include "colosim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>

#include "colosim/channel.hpp"
#include "colosim/engine.hpp"
#include "colosim/memory.hpp"
#include "colosim/reclaim.hpp"
#include "colosim/requests.hpp"
#include "colosim/rng.hpp"

namespace colosim {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// One unit of online compute about to run: a single prefill, or one decode
// iteration over a batch snapshot. `new_pages` is the per-entry KV growth the
// unit needs before it may start.
struct WorkDesc {
  bool is_prefill = false;
  std::int64_t req = -1;
  std::vector<std::int64_t> batch;
  std::vector<int> new_pages;
  std::int64_t total_new_pages = 0;
};

struct OffIter {
  bool active = false;
  bool is_prefill = false;
  std::int64_t req = -1;
  std::vector<std::int64_t> batch;
  SimTime started = 0;
  SimTime end = 0;
};

// Offline compute context saved at a channel-disable suspension. The KV stays
// mapped; only the remaining kernel time is carried over.
struct SavedCtx {
  bool valid = false;
  bool is_prefill = false;
  std::int64_t req = -1;
  std::vector<std::int64_t> batch;
  SimTime remaining = 0;
};

// Coalesces per-class busy time into maximal contiguous intervals.
struct BusyAcc {
  SimTime open_start = kNoTime;
  SimTime open_end = kNoTime;
};

struct ReclaimOp {
  std::int64_t id = 0;
  int gpu = 0;
  int k = 0;
  MemoryPolicy mode = MemoryPolicy::kOurMem;  // selection + cost model
  bool growth = false;                        // async headroom growth, no waiter
  bool has_waiter = false;
  WorkDesc waiter;
  SimTime requested_at = 0;
};

struct GpuState {
  explicit GpuState(const SimParams& p)
      : pool(p.total_handles, p.handle_size_pages, p.page_size_tokens) {}

  MemoryPool pool;

  // Online engine: serial compute, prefill queue ahead of the decode batch.
  std::deque<std::int64_t> online_q;
  std::vector<std::int64_t> decoding;
  bool online_inflight = false;
  bool online_pending = false;  // committed, waiting for the compute drain
  WorkDesc pending_work;
  WorkDesc cur_work;
  SimTime online_started = 0;
  SimTime online_end = 0;
  std::int64_t online_gen = 0;
  SimTime wake_at = kNoTime;
  bool lane_active = false;
  bool online_stalled = false;  // blocked on memory that cannot be reclaimed

  // Offline engine.
  std::deque<std::int64_t> off_waiting;
  std::deque<std::int64_t> off_resume;
  std::deque<std::int64_t> off_prefill_q;  // admitted, memory reserved
  std::vector<std::int64_t> off_decoding;
  OffIter off_iter;
  SavedCtx saved;
  std::int64_t off_gen = 0;

  BusyAcc busy_on, busy_off;

  std::optional<ReservationController> resctl;
  bool growth_op_pending = false;

  int static_min_free = 0;
  int static_budget = -1;  // offline handle cap once calibration ends
};

enum class Acq : std::uint8_t { kOk, kOpWait, kStall };

class Sim {
 public:
  Sim(const Scenario& sc, const BuiltTraces& traces) : sc_(sc), traces_(traces) {
    engine_.set_handler([this](const SimEvent& ev) { on_event(ev); });
    for (int g = 0; g < sc_.gpus; ++g) {
      gpus_.push_back(std::make_unique<GpuState>(sc_.params));
      GpuState& G = *gpus_.back();
      if (mem() != MemoryPolicy::kUvm) {
        const int h0 = initial_reserve();
        if (h0 > 0) G.pool.online_grow(h0, 0);
      }
      if (mem() == MemoryPolicy::kOurMem) G.resctl.emplace(sc_.params.reservation);
      G.static_min_free = G.pool.free_handles();
    }
    if (colocated() && sc_.policy.compute != ComputePolicy::kKernelPreempt) {
      const bool gp = sc_.policy.compute == ComputePolicy::kGpreempt;
      const SimTime toggle =
          gp ? sc_.params.gpreempt_latency_us : sc_.params.effective_toggle_us(sc_.gpus);
      const SimTime cooldown =
          gp ? 0 : CooldownPolicy{sc_.params.max_gap_us()}.cooldown_us();
      ChannelController::Hooks hooks;
      hooks.schedule = [this](SimTime when, std::int64_t gen, bool cd) {
        engine_.schedule(when, cd ? EventKind::kCooldownExpiry : EventKind::kChannelToggle, -1, gen);
      };
      hooks.on_disabled = [this](SimTime t) { suspend_all_offline(t); };
      hooks.on_enabled = [this](SimTime t) {
        for (int g = 0; g < sc_.gpus; ++g) pump_offline(g, t);
      };
      hooks.log = [this](SimTime t, ChannelLog what, SimTime aux, bool memory_cause) {
        log_channel(t, what, aux, memory_cause);
      };
      channel_.emplace(toggle, cooldown, std::move(hooks));
    }
  }

  SimOutput run() {
    LogRecord& meta = push(0, LogKind::kRunMeta);
    meta.s = sc_.name;
    meta.s2 = sc_.preset;
    meta.u0 = sc_.seed;
    meta.u1 = traces_.online_fingerprint;
    meta.u2 = traces_.offline_fingerprint;
    meta.i0 = sc_.gpus;
    meta.i1 = sc_.horizon_us;

    std::int64_t next_on = 0, next_off = 0;
    merged_ids_.reserve(traces_.merged.size());
    for (std::size_t i = 0; i < traces_.merged.size(); ++i) {
      const TraceRecord& tr = traces_.merged[i];
      if (tr.cls == RequestClass::kOnline) {
        OnlineRequest r;
        r.id = next_on++;
        r.arrival = tr.arrival_us;
        r.prompt_tokens = tr.prompt_tokens;
        r.output_tokens = tr.output_tokens;
        r.gpu = static_cast<int>(r.id % sc_.gpus);
        merged_ids_.push_back(r.id);
        onl_.push_back(std::move(r));
        onl_ready_.push_back(0);
      } else {
        OfflineRequest r;
        r.id = next_off++;
        r.arrival = tr.arrival_us;
        r.input_tokens = tr.prompt_tokens;
        r.output_tokens = tr.output_tokens;
        r.gpu = static_cast<int>(r.id % sc_.gpus);
        merged_ids_.push_back(r.id);
        ofl_.push_back(std::move(r));
      }
      engine_.schedule(tr.arrival_us, EventKind::kArrival, -1, static_cast<std::int64_t>(i));
    }

    if (mem() == MemoryPolicy::kOurMem) {
      for (int g = 0; g < sc_.gpus; ++g) {
        const ReservationParams& rp = sc_.params.reservation;
        engine_.schedule(rp.t_init_us, EventKind::kReservationTick, g);
        engine_.schedule(rp.window_us, EventKind::kReservationWindow, g);
      }
    }
    if (mem() == MemoryPolicy::kStaticMem && colocated()) {
      calib_end_ = static_cast<SimTime>(
          std::llround(static_cast<double>(sc_.horizon_us) * sc_.params.static_window_frac));
      engine_.schedule(calib_end_, EventKind::kStaticCalibEnd);
    }

    engine_.run(sc_.horizon_us);
    finalize(sc_.horizon_us);
    return SimOutput{std::move(log_), sc_.horizon_us};
  }

 private:
  MemoryPolicy mem() const { return sc_.policy.memory; }
  bool colocated() const { return !sc_.policy.standalone; }
  bool calibrating(SimTime t) const {
    return mem() == MemoryPolicy::kStaticMem && colocated() && t < calib_end_;
  }
  int initial_reserve() const {
    return static_cast<int>(std::ceil(sc_.params.initial_reserve_fraction *
                                      sc_.params.total_handles));
  }
  int pages_for_tokens(std::int64_t tokens) const {
    return static_cast<int>(ceil_div(tokens, sc_.params.page_size_tokens));
  }

  LogRecord& push(SimTime t, LogKind kind) {
    LogRecord r;
    r.t = t;
    r.seq = static_cast<std::int64_t>(log_.size());
    r.kind = kind;
    log_.push_back(std::move(r));
    return log_.back();
  }

  void log_channel(SimTime t, ChannelLog what, SimTime aux, bool memory_cause) {
    switch (what) {
      case ChannelLog::kDisableIssued: {
        LogRecord& r = push(t, LogKind::kDisableIssued);
        r.i0 = aux;
        r.s = memory_cause ? "memory" : "busy";
        break;
      }
      case ChannelLog::kDisabled:
        push(t, LogKind::kDisabled);
        break;
      case ChannelLog::kEnableIssued:
        push(t, LogKind::kEnableIssued).i0 = aux;
        break;
      case ChannelLog::kEnabled:
        push(t, LogKind::kEnabled);
        break;
      case ChannelLog::kCooldownScheduled:
        push(t, LogKind::kCooldownScheduled).i0 = aux;
        break;
      case ChannelLog::kCooldownCancelled:
        push(t, LogKind::kCooldownCancelled);
        break;
    }
  }

  void add_busy(int g, RequestClass cls, SimTime start, SimTime stop) {
    if (stop <= start) return;
    BusyAcc& acc = cls == RequestClass::kOnline ? gpus_[g]->busy_on : gpus_[g]->busy_off;
    if (acc.open_start != kNoTime && start == acc.open_end) {
      acc.open_end = stop;
      return;
    }
    flush_busy(g, cls);
    acc.open_start = start;
    acc.open_end = stop;
  }

  void flush_busy(int g, RequestClass cls) {
    BusyAcc& acc = cls == RequestClass::kOnline ? gpus_[g]->busy_on : gpus_[g]->busy_off;
    if (acc.open_start == kNoTime) return;
    LogRecord& r = push(acc.open_end, LogKind::kBusy);
    r.gpu = g;
    r.cls = cls;
    r.has_cls = true;
    r.i0 = acc.open_start;
    r.i1 = acc.open_end;
    acc.open_start = acc.open_end = kNoTime;
  }

  // ---- event dispatch ------------------------------------------------------

  void on_event(const SimEvent& ev) {
    const SimTime t = ev.time;
    switch (ev.kind) {
      case EventKind::kArrival:
        handle_arrival(t, ev.a);
        break;
      case EventKind::kOnlineIterStart: {
        GpuState& G = *gpus_[ev.gpu];
        if (!G.online_pending || ev.a != G.online_gen) break;
        WorkDesc w = std::move(G.pending_work);
        G.online_pending = false;
        start_online_iter(ev.gpu, t, std::move(w));
        break;
      }
      case EventKind::kOnlineIterEnd: {
        GpuState& G = *gpus_[ev.gpu];
        if (!G.online_inflight || ev.a != G.online_gen) break;
        finish_online_iter(ev.gpu, t);
        break;
      }
      case EventKind::kOnlineWake: {
        GpuState& G = *gpus_[ev.gpu];
        if (G.wake_at != t) break;  // superseded
        G.wake_at = kNoTime;
        pump_online(ev.gpu, t);
        break;
      }
      case EventKind::kOfflineIterEnd: {
        GpuState& G = *gpus_[ev.gpu];
        if (!G.off_iter.active || ev.a != G.off_gen) break;
        finish_offline_iter(ev.gpu, t);
        break;
      }
      case EventKind::kChannelToggle:
        channel_->handle_toggle(t, ev.a);
        break;
      case EventKind::kCooldownExpiry:
        channel_->handle_cooldown(t, ev.a);
        break;
      case EventKind::kReclaimDone:
        finish_op(t, ev.b);
        break;
      case EventKind::kReservationTick:
        on_reservation_tick(ev.gpu, t);
        break;
      case EventKind::kReservationWindow:
        on_reservation_window(ev.gpu, t);
        break;
      case EventKind::kStaticCalibEnd:
        on_calibration_end(t);
        break;
      case EventKind::kGeneric:
        break;
    }
  }

  void handle_arrival(SimTime t, std::int64_t merged_idx) {
    const TraceRecord& tr = traces_.merged[static_cast<std::size_t>(merged_idx)];
    const std::int64_t id = merged_ids_[static_cast<std::size_t>(merged_idx)];
    if (tr.cls == RequestClass::kOnline) {
      OnlineRequest& r = onl_[static_cast<std::size_t>(id)];
      LogRecord& rec = push(t, LogKind::kArrival);
      rec.cls = RequestClass::kOnline;
      rec.has_cls = true;
      rec.req = r.id;
      rec.gpu = r.gpu;
      rec.i0 = r.prompt_tokens;
      rec.i1 = r.output_tokens;
      gpus_[r.gpu]->online_q.push_back(r.id);
      pump_online(r.gpu, t);
    } else {
      OfflineRequest& r = ofl_[static_cast<std::size_t>(id)];
      LogRecord& rec = push(t, LogKind::kArrival);
      rec.cls = RequestClass::kOffline;
      rec.has_cls = true;
      rec.req = r.id;
      rec.gpu = r.gpu;
      rec.i0 = r.input_tokens;
      rec.i1 = r.output_tokens;
      gpus_[r.gpu]->off_waiting.push_back(r.id);
      pump_offline(r.gpu, t);
    }
  }

  // ---- lane / channel edges ------------------------------------------------

  void lane_activate(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    if (G.lane_active) return;
    G.lane_active = true;
    if (channel_) {
      if (busy_lanes_++ == 0) channel_->note_busy(t);
    }
  }

  void lane_deactivate(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    if (!G.lane_active) return;
    G.lane_active = false;
    if (channel_) {
      if (--busy_lanes_ == 0) channel_->note_all_idle(t);
    } else if (colocated()) {
      pump_offline(g, t);  // per-GPU gate opens: offline wakes immediately
    }
  }

  // ---- online engine -------------------------------------------------------

  void schedule_wake(int g, SimTime when) {
    GpuState& G = *gpus_[g];
    if (G.wake_at != kNoTime && G.wake_at <= when) return;
    G.wake_at = when;
    engine_.schedule(when, EventKind::kOnlineWake, g);
  }

  void pump_online(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    if (G.online_inflight || G.online_pending || G.online_stalled) return;
    WorkDesc w;
    if (!G.online_q.empty()) {
      const std::int64_t id = G.online_q.front();
      const OnlineRequest& r = onl_[static_cast<std::size_t>(id)];
      w.is_prefill = true;
      w.req = id;
      const int pg = pages_for_tokens(r.prompt_tokens);
      w.new_pages = {pg};
      w.total_new_pages = pg;
    } else if (!G.decoding.empty()) {
      SimTime ready = t;
      for (std::int64_t id : G.decoding)
        ready = std::max(ready, onl_ready_[static_cast<std::size_t>(id)]);
      if (ready > t) {
        schedule_wake(g, ready);
        return;
      }
      w.is_prefill = false;
      w.batch = G.decoding;
      w.new_pages.reserve(w.batch.size());
      for (std::int64_t id : w.batch) {
        const OnlineRequest& r = onl_[static_cast<std::size_t>(id)];
        const std::int64_t tokens_after =
            static_cast<std::int64_t>(r.prompt_tokens) +
            static_cast<std::int64_t>(r.token_emit_times.size()) + 1;
        const int need = std::max(0, pages_for_tokens(tokens_after) - r.pages);
        w.new_pages.push_back(need);
        w.total_new_pages += need;
      }
    } else {
      return;
    }
    commit_online(g, t, std::move(w));
  }

  void commit_online(int g, SimTime t, WorkDesc w) {
    GpuState& G = *gpus_[g];
    // A memory wait with no bounded resolution must not gate offline compute,
    // or the memory it is waiting for would never be freed.
    if (mem() == MemoryPolicy::kPrism && !prism_can_fit(G, w.total_new_pages)) {
      stall_online(g, t);
      return;
    }
    lane_activate(g, t);
    const Acq a = acquire_online_pages(g, t, w);
    if (a == Acq::kStall) {
      stall_online(g, t);
      lane_deactivate(g, t);
      return;
    }
    if (a == Acq::kOpWait) return;  // op completion starts the iteration
    begin_after_memory(g, t, std::move(w), 0);
  }

  void stall_online(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    if (!G.online_stalled) {
      G.online_stalled = true;
      LogRecord& r = push(t, LogKind::kStall);
      r.gpu = g;
      r.cls = RequestClass::kOnline;
      r.has_cls = true;
      r.s = "memory";
    }
  }

  bool prism_can_fit(const GpuState& G, std::int64_t need) const {
    const std::int64_t slack =
        G.pool.online_capacity_pages() - G.pool.online_used_pages() +
        static_cast<std::int64_t>(G.pool.free_handles()) * sc_.params.handle_size_pages;
    return need <= slack;
  }

  // Acquires `w.total_new_pages` for the online side, growing the reservation
  // from free handles first and falling back to the policy's reclamation path.
  Acq acquire_online_pages(int g, SimTime t, WorkDesc& w) {
    GpuState& G = *gpus_[g];
    const std::int64_t need = w.total_new_pages;
    const int hsz = sc_.params.handle_size_pages;
    std::int64_t deficit = G.pool.online_used_pages() + need - G.pool.online_capacity_pages();
    if (deficit > 0) {
      const int want = static_cast<int>(ceil_div(deficit, hsz));
      const int from_free = std::min(want, G.pool.free_handles());
      if (from_free > 0) grow_reserve(g, t, from_free, "demand");
      deficit -= static_cast<std::int64_t>(from_free) * hsz;
    }
    if (deficit > 0) {
      const int k = static_cast<int>(ceil_div(deficit, hsz));
      switch (mem()) {
        case MemoryPolicy::kPrism:
          return Acq::kStall;
        case MemoryPolicy::kStaticMem: {
          log_pressure(g, t, need);
          if (!static_kill(g, t, k)) return Acq::kStall;
          break;  // capacity grew; fall through to the charge
        }
        case MemoryPolicy::kOurMem: {
          if (!G.growth_op_pending) {
            G.resctl->record_pressure(t);
            log_pressure(g, t, need);
          }
          const int avail = G.pool.offline_handles();
          if (avail == 0) return Acq::kStall;
          queue_op(g, std::min(k, avail), MemoryPolicy::kOurMem, false, std::move(w), t);
          return Acq::kOpWait;
        }
        case MemoryPolicy::kUvm: {
          log_pressure(g, t, need);
          const int avail = G.pool.offline_handles();
          if (avail == 0) return Acq::kStall;
          queue_op(g, std::min(k, avail), MemoryPolicy::kUvm, false, std::move(w), t);
          return Acq::kOpWait;
        }
      }
    }
    charge_pages(g, t, w);
    return Acq::kOk;
  }

  void charge_pages(int g, SimTime t, const WorkDesc& w) {
    GpuState& G = *gpus_[g];
    if (w.total_new_pages > 0) {
      G.pool.online_use_pages(w.total_new_pages);
      if (w.is_prefill) {
        onl_[static_cast<std::size_t>(w.req)].pages += w.new_pages[0];
      } else {
        for (std::size_t i = 0; i < w.batch.size(); ++i)
          onl_[static_cast<std::size_t>(w.batch[i])].pages += w.new_pages[i];
      }
    }
    note_static_free(G);
    maybe_pressure_growth(g, t);
  }

  void note_static_free(GpuState& G) {
    if (mem() == MemoryPolicy::kStaticMem)
      G.static_min_free = std::min(G.static_min_free, G.pool.free_handles());
  }

  // Threshold crossing after a successful allocation: multiplicative headroom
  // growth, free handles first, the rest reclaimed asynchronously.
  void maybe_pressure_growth(int g, SimTime t) {
    if (mem() != MemoryPolicy::kOurMem) return;
    GpuState& G = *gpus_[g];
    const std::int64_t cap = G.pool.online_capacity_pages();
    if (cap == 0) return;
    const double util =
        static_cast<double>(G.pool.online_used_pages()) / static_cast<double>(cap);
    if (util < sc_.params.reservation.pressure_threshold) return;
    if (G.growth_op_pending) return;
    G.resctl->record_pressure(t);
    log_pressure(g, t, 0);
    const int h = G.pool.online_handles();
    const int target = G.resctl->grow_target(h, sc_.params.total_handles);
    int want = target - h;
    if (want <= 0) return;
    const int from_free = std::min(want, G.pool.free_handles());
    if (from_free > 0) grow_reserve(g, t, from_free, "pressure");
    want -= from_free;
    const int avail = G.pool.offline_handles();
    if (want > 0 && avail > 0)
      queue_op(g, std::min(want, avail), MemoryPolicy::kOurMem, true, WorkDesc{}, t);
  }

  void log_pressure(int g, SimTime t, std::int64_t extra_pages) {
    GpuState& G = *gpus_[g];
    LogRecord& r = push(t, LogKind::kPressure);
    r.gpu = g;
    r.i0 = G.pool.online_used_pages() + extra_pages;
    r.i1 = G.pool.online_capacity_pages();
  }

  void grow_reserve(int g, SimTime t, int k, const char* cause) {
    GpuState& G = *gpus_[g];
    const int old_h = G.pool.online_handles();
    G.pool.online_grow(k, t);
    LogRecord& r = push(t, LogKind::kReserveChange);
    r.gpu = g;
    r.i0 = old_h;
    r.i1 = G.pool.online_handles();
    r.s = cause;
    note_static_free(G);
  }

  // Instant offline kills freeing k handles for the online side. Returns false
  // if even killing everything cannot cover the deficit.
  bool static_kill(int g, SimTime t, int k) {
    GpuState& G = *gpus_[g];
    if (G.pool.offline_handles() < k) return false;
    ReclaimInstance inst = make_instance(G);
    const std::vector<int> chosen = fifo_reclaim(inst, k);
    const int old_h = G.pool.online_handles();
    MemoryPool::ReclaimResult res = G.pool.apply_reclaim(chosen, t);
    apply_evictions(g, t, res, /*kill=*/true);
    LogRecord& r = push(t, LogKind::kReserveChange);
    r.gpu = g;
    r.i0 = old_h;
    r.i1 = G.pool.online_handles();
    r.s = "demand";
    return true;
  }

  void begin_after_memory(int g, SimTime t, WorkDesc w, SimTime extra_delay) {
    GpuState& G = *gpus_[g];
    SimTime drain = t;
    if (colocated() && G.off_iter.active) {
      if (sc_.policy.compute == ComputePolicy::kKernelPreempt) {
        drain = G.off_iter.end;
      } else {
        drain = G.off_iter.end;
        if (channel_->state() == ChannelController::State::kDisabling)
          drain = std::min(drain, channel_->pending_effective());
        drain = std::max(drain, t);
      }
    }
    if (drain > t) {
      LogRecord& r = push(t, LogKind::kPreemptWait);
      r.gpu = g;
      r.req = w.is_prefill ? w.req : -1;
      r.i0 = drain - t;
    }
    const SimTime start = drain + extra_delay;
    if (start > t) {
      G.online_pending = true;
      G.pending_work = std::move(w);
      engine_.schedule(start, EventKind::kOnlineIterStart, g, G.online_gen);
    } else {
      start_online_iter(g, t, std::move(w));
    }
  }

  void start_online_iter(int g, SimTime t, WorkDesc w) {
    GpuState& G = *gpus_[g];
    SimTime dur;
    if (w.is_prefill) {
      OnlineRequest& r = onl_[static_cast<std::size_t>(w.req)];
      r.state = OnlineState::kPrefilling;
      G.online_q.pop_front();
      dur = sc_.params.prefill_us_per_token * r.prompt_tokens;
      LogRecord& rec = push(t, LogKind::kPrefillStart);
      rec.cls = RequestClass::kOnline;
      rec.has_cls = true;
      rec.req = r.id;
      rec.gpu = g;
      rec.i0 = r.prompt_tokens;
    } else {
      dur = sc_.params.decode_iter_us;
    }
    G.cur_work = std::move(w);
    G.online_inflight = true;
    G.online_started = t;
    G.online_end = t + dur;
    engine_.schedule(G.online_end, EventKind::kOnlineIterEnd, g, G.online_gen);
  }

  void finish_online_iter(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    add_busy(g, RequestClass::kOnline, G.online_started, t);
    G.online_inflight = false;
    ++G.online_gen;
    WorkDesc w = std::move(G.cur_work);
    bool released = false;
    if (w.is_prefill) {
      OnlineRequest& r = onl_[static_cast<std::size_t>(w.req)];
      r.state = OnlineState::kDecoding;
      LogRecord& rec = push(t, LogKind::kPrefillEnd);
      rec.cls = RequestClass::kOnline;
      rec.has_cls = true;
      rec.req = r.id;
      rec.gpu = g;
      G.decoding.push_back(r.id);
      onl_ready_[static_cast<std::size_t>(r.id)] = t;
    } else {
      for (std::int64_t id : w.batch) {
        OnlineRequest& r = onl_[static_cast<std::size_t>(id)];
        r.token_emit_times.push_back(t);
        const int n = static_cast<int>(r.token_emit_times.size());
        r.digest = hash_mix(r.digest, hash_mix(static_cast<std::uint64_t>(r.id),
                                               static_cast<std::uint64_t>(n)));
        if (n == 1) {
          LogRecord& rec = push(t, LogKind::kFirstToken);
          rec.cls = RequestClass::kOnline;
          rec.has_cls = true;
          rec.req = r.id;
          rec.gpu = g;
        }
        if (n == r.output_tokens) {
          r.state = OnlineState::kDone;
          r.completion = t;
          LogRecord& rec = push(t, LogKind::kDone);
          rec.cls = RequestClass::kOnline;
          rec.has_cls = true;
          rec.req = r.id;
          rec.gpu = g;
          rec.i0 = n;
          rec.i1 = r.first_token_at();
          rec.i2 = t;
          rec.u0 = r.digest;
          G.pool.online_free_pages(r.pages);
          r.pages = 0;
          released = true;
          G.decoding.erase(std::find(G.decoding.begin(), G.decoding.end(), r.id));
        } else {
          onl_ready_[static_cast<std::size_t>(id)] =
              t + sc_.params.gap.sample(sc_.seed, r.id, n);
        }
      }
    }
    pump_online(g, t);
    if (released && mem() == MemoryPolicy::kUvm) {
      // Uvm keeps no reservation headroom: anything beyond the live working
      // set goes back to the pool so offline can map it again. A later online
      // burst then has to migrate it out, which is the cost this mode trades
      // for zero idle reservation.
      const int old_h = G.pool.online_handles();
      if (G.pool.online_release(old_h) > 0) {
        LogRecord& rec = push(t, LogKind::kReserveChange);
        rec.gpu = g;
        rec.i0 = old_h;
        rec.i1 = G.pool.online_handles();
        rec.s = "release";
      }
    }
    if (!G.online_inflight && !G.online_pending) lane_deactivate(g, t);
    if (released) pump_offline(g, t);
  }

  // ---- offline engine ------------------------------------------------------

  bool offline_allowed(int g) const {
    if (!colocated()) return false;
    if (op_running_ && !sc_.params.unsafe_skip_compute_gate) return false;
    if (channel_) return channel_->offline_compute_allowed();
    return !gpus_[g]->lane_active;
  }

  void admit_offline(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    const int cap = mem() == MemoryPolicy::kStaticMem ? G.static_budget : -1;
    auto try_admit = [&](std::deque<std::int64_t>& q) {
      while (!q.empty()) {
        const std::int64_t id = q.front();
        OfflineRequest& r = ofl_[static_cast<std::size_t>(id)];
        if (r.state == OfflineState::kDone || r.state == OfflineState::kKilled) {
          q.pop_front();
          continue;
        }
        const int pages =
            pages_for_tokens(static_cast<std::int64_t>(r.input_tokens) + r.output_tokens);
        if (!G.pool.offline_reserve(id, pages, t, cap)) return;
        r.reserved_pages = pages;
        r.state = OfflineState::kRunning;
        r.prefill_done = false;
        G.off_prefill_q.push_back(id);
        q.pop_front();
      }
    };
    try_admit(G.off_resume);
    try_admit(G.off_waiting);
  }

  void pump_offline(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    if (calibrating(t) || !offline_allowed(g) || G.off_iter.active) return;
    admit_offline(g, t);
    if (G.saved.valid) {
      SavedCtx ctx = std::move(G.saved);
      G.saved.valid = false;
      if (!ctx.is_prefill) {
        std::erase_if(ctx.batch, [&](std::int64_t id) {
          return ofl_[static_cast<std::size_t>(id)].state != OfflineState::kRunning;
        });
        if (ctx.batch.empty()) {
          pump_offline(g, t);
          return;
        }
      } else if (ofl_[static_cast<std::size_t>(ctx.req)].state != OfflineState::kRunning) {
        pump_offline(g, t);
        return;
      }
      G.off_iter.active = true;
      G.off_iter.is_prefill = ctx.is_prefill;
      G.off_iter.req = ctx.req;
      G.off_iter.batch = std::move(ctx.batch);
      G.off_iter.started = t;
      G.off_iter.end = t + ctx.remaining;
      engine_.schedule(G.off_iter.end, EventKind::kOfflineIterEnd, g, G.off_gen);
      return;
    }
    if (!G.off_prefill_q.empty()) {
      const std::int64_t id = G.off_prefill_q.front();
      G.off_prefill_q.pop_front();
      OfflineRequest& r = ofl_[static_cast<std::size_t>(id)];
      const SimTime dur = sc_.params.prefill_us_per_token * r.recompute_cost();
      LogRecord& rec = push(t, LogKind::kPrefillStart);
      rec.cls = RequestClass::kOffline;
      rec.has_cls = true;
      rec.req = id;
      rec.gpu = g;
      rec.i0 = r.recompute_cost();
      G.off_iter = OffIter{true, true, id, {}, t, t + dur};
      engine_.schedule(G.off_iter.end, EventKind::kOfflineIterEnd, g, G.off_gen);
      return;
    }
    if (!G.off_decoding.empty()) {
      std::vector<std::int64_t> batch(
          G.off_decoding.begin(),
          G.off_decoding.begin() +
              std::min<std::size_t>(G.off_decoding.size(),
                                    static_cast<std::size_t>(sc_.params.max_offline_batch)));
      G.off_iter = OffIter{true, false, -1, std::move(batch), t, t + sc_.params.decode_iter_us};
      engine_.schedule(G.off_iter.end, EventKind::kOfflineIterEnd, g, G.off_gen);
      return;
    }
  }

  void finish_offline_iter(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    add_busy(g, RequestClass::kOffline, G.off_iter.started, t);
    G.off_iter.active = false;
    ++G.off_gen;
    bool released = false;
    if (G.off_iter.is_prefill) {
      OfflineRequest& r = ofl_[static_cast<std::size_t>(G.off_iter.req)];
      if (r.state == OfflineState::kRunning) {
        r.prefill_done = true;
        LogRecord& rec = push(t, LogKind::kPrefillEnd);
        rec.cls = RequestClass::kOffline;
        rec.has_cls = true;
        rec.req = r.id;
        rec.gpu = g;
        G.off_decoding.push_back(r.id);
      }
    } else {
      for (std::int64_t id : G.off_iter.batch) {
        OfflineRequest& r = ofl_[static_cast<std::size_t>(id)];
        if (r.state != OfflineState::kRunning) continue;
        ++r.generated;
        r.digest = hash_mix(r.digest, hash_mix(static_cast<std::uint64_t>(r.id),
                                               static_cast<std::uint64_t>(r.generated)));
        if (r.generated == r.output_tokens) {
          r.state = OfflineState::kDone;
          r.completion = t;
          LogRecord& rec = push(t, LogKind::kDone);
          rec.cls = RequestClass::kOffline;
          rec.has_cls = true;
          rec.req = r.id;
          rec.gpu = g;
          rec.i0 = r.generated;
          rec.i1 = kNoTime;
          rec.i2 = kNoTime;
          rec.u0 = r.digest;
          G.pool.offline_release(r.id);
          r.reserved_pages = 0;
          released = true;
          G.off_decoding.erase(std::find(G.off_decoding.begin(), G.off_decoding.end(), r.id));
        }
      }
    }
    if (released && G.online_stalled) {
      G.online_stalled = false;
      pump_online(g, t);
    }
    pump_offline(g, t);
  }

  void suspend_all_offline(SimTime t) {
    for (int g = 0; g < sc_.gpus; ++g) {
      GpuState& G = *gpus_[g];
      if (!G.off_iter.active) continue;
      add_busy(g, RequestClass::kOffline, G.off_iter.started, t);
      G.saved.valid = true;
      G.saved.is_prefill = G.off_iter.is_prefill;
      G.saved.req = G.off_iter.req;
      G.saved.batch = std::move(G.off_iter.batch);
      G.saved.remaining = G.off_iter.end - t;
      G.off_iter.active = false;
      ++G.off_gen;
    }
  }

  // ---- reclamation ops -----------------------------------------------------

  ReclaimInstance make_instance(const GpuState& G) const {
    ReclaimInstance inst = G.pool.snapshot();
    for (const ReclaimHandle& h : inst.handles)
      for (std::int64_t req : h.requests)
        inst.cost[req] = ofl_[static_cast<std::size_t>(req)].recompute_cost();
    return inst;
  }

  void queue_op(int g, int k, MemoryPolicy mode, bool growth, WorkDesc waiter, SimTime t) {
    ReclaimOp op;
    op.id = next_op_id_++;
    op.gpu = g;
    op.k = k;
    op.mode = mode;
    op.growth = growth;
    op.has_waiter = !growth;
    op.waiter = std::move(waiter);
    op.requested_at = t;
    LogRecord& r = push(t, LogKind::kReclaimRequest);
    r.gpu = g;
    r.i0 = k;
    r.i1 = op.id;
    r.s = growth ? "growth" : (mode == MemoryPolicy::kUvm ? "uvm" : "shortfall");
    if (growth) {
      gpus_[g]->growth_op_pending = true;
    } else {
      // The waiter is committed online work: it keeps the lane busy (so the
      // channel stays disabled across the wait) and blocks pump_online from
      // re-committing the same queue head while the op is in flight.
      gpus_[g]->online_pending = true;
    }
    ops_.push_back(std::move(op));
    if (!op_running_) start_next_op(t);
  }

  void start_next_op(SimTime t) {
    ReclaimOp& op = ops_.front();
    op_running_ = true;
    SimTime gate = t;
    if (!sc_.params.unsafe_skip_compute_gate) {
      if (channel_) {
        gate = channel_->ensure_disabled(t);
      } else if (gpus_[op.gpu]->off_iter.active) {
        gate = gpus_[op.gpu]->off_iter.end;
      }
    }
    const SimTime cost =
        op.mode == MemoryPolicy::kUvm ? 0 : static_cast<SimTime>(op.k) * sc_.params.remap_cost_us;
    engine_.schedule(std::max(gate, t) + cost, EventKind::kReclaimDone, op.gpu, 0, op.id);
  }

  void finish_op(SimTime t, std::int64_t op_id) {
    ReclaimOp op = std::move(ops_.front());
    if (op.id != op_id) throw std::logic_error("reclaim op order violated");
    ops_.pop_front();
    op_running_ = false;
    GpuState& G = *gpus_[op.gpu];
    if (op.growth) G.growth_op_pending = false;

    ReclaimInstance inst = make_instance(G);
    const int k = std::min<int>(op.k, static_cast<int>(inst.handles.size()));
    std::vector<int> chosen;
    if (k > 0)
      chosen = op.mode == MemoryPolicy::kUvm ? fifo_reclaim(inst, k) : selective_reclaim(inst, k);
    const int old_h = G.pool.online_handles();
    MemoryPool::ReclaimResult res = G.pool.apply_reclaim(chosen, t);
    apply_evictions(op.gpu, t, res, /*kill=*/false);
    LogRecord& done = push(t, LogKind::kReclaimDone);
    done.gpu = op.gpu;
    done.i0 = op.id;
    done.i1 = t - op.requested_at;
    for (int h : chosen) done.ids.push_back(h);
    if (!chosen.empty()) {
      LogRecord& r = push(t, LogKind::kReserveChange);
      r.gpu = op.gpu;
      r.i0 = old_h;
      r.i1 = G.pool.online_handles();
      r.s = op.growth ? "pressure" : "demand";
    }

    if (op.has_waiter) {
      WorkDesc w = std::move(op.waiter);
      G.online_pending = false;  // re-armed below if the start defers or retries
      const std::int64_t need = w.total_new_pages;
      if (G.pool.online_used_pages() + need <= G.pool.online_capacity_pages()) {
        charge_pages(op.gpu, t, w);
        SimTime extra = 0;
        if (op.mode == MemoryPolicy::kUvm) {
          extra = static_cast<SimTime>(chosen.size()) * sc_.params.handle_size_pages *
                  sc_.params.uvm_page_penalty_us;
        }
        LogRecord& d = push(t, LogKind::kOnlineDelay);
        d.gpu = op.gpu;
        d.req = w.is_prefill ? w.req : -1;
        d.i0 = (t - op.requested_at) + extra;
        d.s = op.mode == MemoryPolicy::kUvm ? "migration" : "reclaim";
        begin_after_memory(op.gpu, t, std::move(w), extra);
      } else {
        const Acq a = acquire_online_pages(op.gpu, t, w);
        if (a == Acq::kOk) {
          begin_after_memory(op.gpu, t, std::move(w), 0);
        } else if (a == Acq::kStall) {
          stall_online(op.gpu, t);
          lane_deactivate(op.gpu, t);
        }
      }
    } else if (G.online_stalled) {
      G.online_stalled = false;
      pump_online(op.gpu, t);
    }
    if (!ops_.empty()) {
      if (!op_running_) start_next_op(t);
    } else {
      for (int g = 0; g < sc_.gpus; ++g) pump_offline(g, t);
    }
  }

  void apply_evictions(int g, SimTime t, const MemoryPool::ReclaimResult& res, bool kill) {
    GpuState& G = *gpus_[g];
    for (std::int64_t id : res.evicted_requests) {
      OfflineRequest& r = ofl_[static_cast<std::size_t>(id)];
      const bool inflight =
          G.off_iter.active && (G.off_iter.is_prefill
                                    ? G.off_iter.req == id
                                    : std::find(G.off_iter.batch.begin(), G.off_iter.batch.end(),
                                                id) != G.off_iter.batch.end());
      if (inflight && !kill && sc_.params.unsafe_skip_compute_gate) {
        LogRecord& f = push(t, LogKind::kFault);
        f.gpu = g;
        f.req = id;
        f.ids = res.invalidated_pages.at(id);
      }
      LogRecord& inv = push(t, LogKind::kInvalidation);
      inv.req = id;
      inv.gpu = g;
      inv.ids = res.invalidated_pages.at(id);
      r.reserved_pages = 0;
      r.prefill_done = false;
      if (kill) {
        r.state = OfflineState::kKilled;
        LogRecord& kr = push(t, LogKind::kKilled);
        kr.req = id;
        kr.gpu = g;
        kr.i0 = r.recompute_cost();
      } else {
        r.state = OfflineState::kEvictedWaiting;
        ++r.evictions;
        LogRecord& er = push(t, LogKind::kEvicted);
        er.req = id;
        er.gpu = g;
        er.i0 = r.recompute_cost();
        G.off_resume.push_back(id);
      }
      std::erase(G.off_prefill_q, id);
      std::erase(G.off_decoding, id);
      if (G.saved.valid) {
        if (G.saved.is_prefill) {
          if (G.saved.req == id) G.saved.valid = false;
        } else {
          std::erase(G.saved.batch, id);
          if (G.saved.batch.empty()) G.saved.valid = false;
        }
      }
      if (inflight && kill) {
        if (G.off_iter.is_prefill) {
          add_busy(g, RequestClass::kOffline, G.off_iter.started, t);
          G.off_iter.active = false;
          ++G.off_gen;
        } else {
          std::erase(G.off_iter.batch, id);
        }
      }
    }
  }

  // ---- reservation controller ----------------------------------------------

  void on_reservation_tick(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    if (G.resctl->release_due(t, G.pool.online_handles())) {
      const int old_h = G.pool.online_handles();
      if (G.pool.online_release(1) > 0) {
        LogRecord& r = push(t, LogKind::kReserveChange);
        r.gpu = g;
        r.i0 = old_h;
        r.i1 = G.pool.online_handles();
        r.s = "release";
        pump_offline(g, t);
      }
    }
    G.resctl->note_tick(t);
    engine_.schedule(t + G.resctl->interval(), EventKind::kReservationTick, g);
  }

  void on_reservation_window(int g, SimTime t) {
    GpuState& G = *gpus_[g];
    const SimTime old_t = G.resctl->interval();
    const SimTime new_t = G.resctl->window_tick(t);
    if (new_t != old_t) {
      LogRecord& r = push(t, LogKind::kIntervalChange);
      r.gpu = g;
      r.i0 = old_t;
      r.i1 = new_t;
    }
    engine_.schedule(t + sc_.params.reservation.window_us, EventKind::kReservationWindow, g);
  }

  void on_calibration_end(SimTime t) {
    for (int g = 0; g < sc_.gpus; ++g) {
      GpuState& G = *gpus_[g];
      G.static_budget = G.static_min_free;
      LogRecord& r = push(t, LogKind::kStaticLimit);
      r.gpu = g;
      r.i0 = G.static_budget;
      pump_offline(g, t);
    }
  }

  // ---- end of run ----------------------------------------------------------

  void finalize(SimTime horizon) {
    for (int g = 0; g < sc_.gpus; ++g) {
      GpuState& G = *gpus_[g];
      if (G.online_inflight) add_busy(g, RequestClass::kOnline, G.online_started, horizon);
      if (G.off_iter.active) add_busy(g, RequestClass::kOffline, G.off_iter.started, horizon);
      flush_busy(g, RequestClass::kOnline);
      flush_busy(g, RequestClass::kOffline);
    }
    for (const OnlineRequest& r : onl_) {
      if (r.state == OnlineState::kDone) continue;
      LogRecord& rec = push(horizon, LogKind::kSnapshot);
      rec.cls = RequestClass::kOnline;
      rec.has_cls = true;
      rec.req = r.id;
      rec.gpu = r.gpu;
      rec.i0 = static_cast<std::int64_t>(r.token_emit_times.size());
      rec.i1 = r.first_token_at();
      rec.i2 = r.token_emit_times.empty() ? kNoTime : r.token_emit_times.back();
      rec.s = to_string(r.state);
    }
    for (const OfflineRequest& r : ofl_) {
      if (r.state == OfflineState::kDone || r.state == OfflineState::kKilled) continue;
      LogRecord& rec = push(horizon, LogKind::kSnapshot);
      rec.cls = RequestClass::kOffline;
      rec.has_cls = true;
      rec.req = r.id;
      rec.gpu = r.gpu;
      rec.i0 = r.generated;
      rec.i1 = kNoTime;
      rec.i2 = kNoTime;
      rec.s = to_string(r.state);
    }
  }

  const Scenario& sc_;
  const BuiltTraces& traces_;
  EventQueue engine_;
  std::vector<std::unique_ptr<GpuState>> gpus_;
  std::optional<ChannelController> channel_;
  int busy_lanes_ = 0;
  std::vector<OnlineRequest> onl_;
  std::vector<SimTime> onl_ready_;
  std::vector<OfflineRequest> ofl_;
  std::vector<std::int64_t> merged_ids_;
  std::deque<ReclaimOp> ops_;
  bool op_running_ = false;
  std::int64_t next_op_id_ = 0;
  SimTime calib_end_ = 0;
  std::vector<LogRecord> log_;
};

}  // namespace

SimOutput run_colocation_with_traces(const Scenario& sc, const BuiltTraces& traces) {
  Sim sim(sc, traces);
  return sim.run();
}

SimOutput run_colocation(const Scenario& sc) {
  const BuiltTraces traces = build_traces(sc);
  return run_colocation_with_traces(sc, traces);
}

}  // namespace colosim
