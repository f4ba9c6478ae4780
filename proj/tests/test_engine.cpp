#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <stdexcept>
#include <vector>

#include "colosim/engine.hpp"
#include "doctest.h"

using namespace colosim;

TEST_CASE("events at equal times run in insertion order") {
  EventQueue q;
  std::vector<std::int64_t> order;
  q.set_handler([&](const SimEvent& e) { order.push_back(e.a); });
  q.schedule(50, EventKind::kGeneric, -1, 1);
  q.schedule(10, EventKind::kGeneric, -1, 2);
  q.schedule(50, EventKind::kGeneric, -1, 3);
  q.schedule(10, EventKind::kGeneric, -1, 4);
  q.run();
  CHECK(order == std::vector<std::int64_t>{2, 4, 1, 3});
}

TEST_CASE("scheduling before the clock is a logic error") {
  EventQueue q;
  q.set_handler([](const SimEvent&) {});
  q.schedule(100, EventKind::kGeneric);
  q.run();
  CHECK(q.now() == 100);
  CHECK_THROWS_AS(q.schedule(99, EventKind::kGeneric), std::logic_error);
  CHECK_NOTHROW(q.schedule(100, EventKind::kGeneric));
}

TEST_CASE("run(until) processes events at the bound and stops after it") {
  EventQueue q;
  std::vector<SimTime> ran;
  q.set_handler([&](const SimEvent& e) { ran.push_back(e.time); });
  q.schedule(10, EventKind::kGeneric);
  q.schedule(100, EventKind::kGeneric);
  q.schedule(101, EventKind::kGeneric);
  const SimTime end = q.run(100);
  CHECK(end == 100);
  CHECK(q.now() == 100);
  CHECK(ran == std::vector<SimTime>{10, 100});
  CHECK(q.pending() == 1);
}

TEST_CASE("run without a bound drains the queue and reports the last event time") {
  EventQueue q;
  q.set_handler([](const SimEvent&) {});
  CHECK(q.run() == 0);
  q.schedule(7, EventKind::kGeneric);
  q.schedule(42, EventKind::kGeneric);
  CHECK(q.run() == 42);
  CHECK(q.empty());
}

TEST_CASE("events scheduled mid-run at the current time run after queued peers") {
  EventQueue q;
  std::vector<std::int64_t> order;
  q.set_handler([&](const SimEvent& e) {
    order.push_back(e.a);
    if (e.a == 1) q.schedule(5, EventKind::kGeneric, -1, 99);  // same time as peers
  });
  q.schedule(5, EventKind::kGeneric, -1, 1);
  q.schedule(5, EventKind::kGeneric, -1, 2);
  q.run();
  CHECK(order == std::vector<std::int64_t>{1, 2, 99});
}

TEST_CASE("handler-driven cascades are replayed identically") {
  auto run_once = [] {
    EventQueue q;
    std::vector<std::pair<SimTime, std::int64_t>> trace;
    q.set_handler([&](const SimEvent& e) {
      trace.emplace_back(e.time, e.a);
      if (e.a < 40) {
        q.schedule(e.time + 3, EventKind::kGeneric, -1, e.a * 2);
        q.schedule(e.time + 1, EventKind::kGeneric, -1, e.a * 2 + 1);
      }
    });
    q.schedule(0, EventKind::kGeneric, -1, 1);
    q.run(50);
    return trace;
  };
  CHECK(run_once() == run_once());
}
