#include <cmath>

#include "aim/baselines.hpp"
#include "doctest.h"

using namespace aim;
using namespace aim::baselines;

namespace {

int route_id(const geometry::IntersectionLayout& l, const std::string& name) {
  for (const auto& r : l.routes)
    if (r.name == name) return r.id;
  REQUIRE(false);
  return -1;
}

Vehicle make_vehicle(int id, int route, double s, double v, double stamp = -1.0) {
  Vehicle veh;
  veh.st.id = id;
  veh.st.route = route;
  veh.st.s = s;
  veh.st.v = v;
  veh.arrival_stamp = stamp;
  veh.arrival_seq = id;
  return veh;
}

// Steps the controller and integrates until the predicate holds or the time
// budget runs out; returns the elapsed time, or -1 on timeout.
template <class Pred>
double run_until(World& world, Controller& controller, double dt, double budget, Pred&& done) {
  const dynamics::MotionLimits lim;
  const double start = world.time;
  while (world.time - start < budget) {
    // Stamp control-zone entries like the harness does.
    for (Vehicle& v : world.vehicles)
      if (v.arrival_stamp < 0.0 && world.in_control_zone(v)) {
        v.arrival_stamp = world.time;
        v.arrival_seq = v.st.id;
      }
    const auto acc = controller.step(world);
    for (std::size_t i = 0; i < world.vehicles.size(); ++i)
      world.vehicles[i].st = dynamics::step_vehicle(world.vehicles[i].st, acc[i], dt, lim);
    world.time += dt;
    if (done(world)) return world.time - start;
  }
  return -1.0;
}

}  // namespace

TEST_CASE("signal plan timing per layout") {
  const auto s = geometry::build_layout(geometry::LayoutKind::S);
  const auto m = geometry::build_layout(geometry::LayoutKind::M);
  const auto l = geometry::build_layout(geometry::LayoutKind::L);
  const auto xl = geometry::build_layout(geometry::LayoutKind::XL);
  CHECK(SignalPlan::for_layout(s).cycle_length == doctest::Approx(40.0));
  CHECK(SignalPlan::for_layout(m).cycle_length == doctest::Approx(40.0));
  CHECK(SignalPlan::for_layout(l).cycle_length == doctest::Approx(54.0));
  CHECK(SignalPlan::for_layout(xl).cycle_length == doctest::Approx(68.0));

  const SignalPlan plan = SignalPlan::for_layout(l);
  // Main outer lanes are group 0.
  CHECK(signal_state(plan, 0.0, 0) == SignalState::Green);
  CHECK(signal_state(plan, 23.9, 0) == SignalState::Green);
  CHECK(signal_state(plan, 24.0, 0) == SignalState::Yellow);
  CHECK(signal_state(plan, 26.0, 0) == SignalState::Red);
  CHECK(signal_state(plan, 26.0, 1) == SignalState::Green);
  CHECK(signal_state(plan, 54.0, 0) == SignalState::Green);  // periodic
  CHECK(signal_state(plan, 0.0, 2) == SignalState::Red);
}

TEST_CASE("signal exclusivity: at most one non-red group at any time") {
  for (auto kind : {geometry::LayoutKind::S, geometry::LayoutKind::M, geometry::LayoutKind::L,
                    geometry::LayoutKind::XL}) {
    const auto layout = geometry::build_layout(kind);
    const SignalPlan plan = SignalPlan::for_layout(layout);
    std::vector<int> groups;
    for (const auto& lane : layout.lanes)
      if (lane.approach && lane.signal_group >= 0) groups.push_back(lane.signal_group);
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    for (double t = 0.0; t < plan.cycle_length; t += 0.01) {
      int non_red = 0;
      for (int g : groups) non_red += signal_state(plan, t, g) != SignalState::Red ? 1 : 0;
      REQUIRE(non_red == 1);  // no all-red phase either
    }
  }
}

TEST_CASE("traffic light holds and releases") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::L);
  const int we = route_id(layout, "W_E_through");
  ControllerConfig cfg;
  TrafficLightController tl(cfg, layout);

  SUBCASE("red light: vehicle halts at the stop line") {
    World w;
    w.layout = &layout;
    w.time = 28.0;  // group 1 green, main outer red
    w.vehicles.push_back(make_vehicle(0, we, 40.0, 10.0));
    run_until(w, tl, 0.1, 15.0, [](const World& world) {
      return world.vehicles[0].st.v < 1e-3;
    });
    const Vehicle& v = w.vehicles[0];
    CHECK(v.st.v < 1e-3);
    CHECK(v.st.front_s() < 75.0);
    CHECK(v.st.front_s() > 65.0);
  }
  SUBCASE("yellow onset too close to stop: vehicle continues") {
    World w;
    w.layout = &layout;
    w.time = 24.0;  // yellow for group 0
    w.vehicles.push_back(make_vehicle(0, we, 67.5, 10.0));  // front 5 m before line
    const double t = run_until(w, tl, 0.1, 4.0, [&](const World& world) {
      return world.vehicles[0].st.front_s() > 76.0;
    });
    CHECK(t > 0.0);
    CHECK(w.vehicles[0].st.v > 9.0);
  }
  SUBCASE("yellow onset far away: vehicle stops") {
    World w;
    w.layout = &layout;
    w.time = 24.0;
    w.vehicles.push_back(make_vehicle(0, we, 30.0, 10.0));  // 42.5 m to the line
    run_until(w, tl, 0.1, 12.0, [](const World& world) {
      return world.vehicles[0].st.v < 1e-3;
    });
    CHECK(w.vehicles[0].st.v < 1e-3);
    CHECK(w.vehicles[0].st.front_s() < 75.0);
  }
  SUBCASE("green: free passage") {
    World w;
    w.layout = &layout;
    w.time = 2.0;
    w.vehicles.push_back(make_vehicle(0, we, 40.0, 10.0));
    const double t = run_until(w, tl, 0.1, 10.0, [&](const World& world) {
      return world.vehicles[0].st.s > 85.0;
    });
    CHECK(t > 0.0);
    CHECK(w.vehicles[0].st.v > 9.5);
  }
}

TEST_CASE("traffic light: left turn yields inside the box to oncoming through") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int wn = route_id(layout, "W_N_left");
  const int ew = route_id(layout, "E_W_through");
  const auto rel = layout.conflict(wn, ew);
  REQUIRE(rel.has_value());

  ControllerConfig cfg;
  TrafficLightController tl(cfg, layout);
  World w;
  w.layout = &layout;
  w.time = 2.0;  // main green: both directions move
  w.vehicles.push_back(make_vehicle(0, wn, 74.0, 6.0, 1.0));   // entering the box
  w.vehicles.push_back(make_vehicle(1, ew, 55.0, 10.0, 1.5));  // oncoming at speed

  bool left_waited = false;
  run_until(w, tl, 0.1, 20.0, [&](const World& world) {
    const Vehicle& left = world.vehicles[0];
    if (left.st.v < 0.2 && left.st.front_s() > 75.0 && left.st.front_s() < rel->a_begin)
      left_waited = true;
    return world.vehicles[1].st.rear_s() > rel->b_clear_end && left.st.v > 1.0;
  });
  CHECK(left_waited);  // held at the in-box yield point while oncoming crossed

  // No collision throughout was implied; the left eventually proceeds.
  const double t = run_until(w, tl, 0.1, 20.0, [&](const World& world) {
    return world.vehicles[0].st.s > layout.route(wn).box_exit_s;
  });
  CHECK(t >= 0.0);
}

TEST_CASE("fifo: single vehicle is never held") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int we = route_id(layout, "W_E_through");
  ControllerConfig cfg;
  FifoController fifo(cfg);
  World w;
  w.layout = &layout;
  w.vehicles.push_back(make_vehicle(0, we, 30.0, 10.0));
  double min_v = kInf;
  run_until(w, fifo, 0.1, 12.0, [&](const World& world) {
    min_v = std::min(min_v, world.vehicles[0].st.v);
    return world.vehicles[0].st.s > 90.0;
  });
  CHECK(min_v > 9.0);
}

TEST_CASE("fifo: later arrival waits for the earlier to clear") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int we = route_id(layout, "W_E_through");
  const int sn = route_id(layout, "S_N_through");
  const auto rel = layout.conflict(we, sn);
  REQUIRE(rel.has_value());

  ControllerConfig cfg;
  FifoController fifo(cfg);
  World w;
  w.layout = &layout;
  // Same distance, but the S vehicle arrived (stamped) earlier and is slower:
  // strict FIFO holds the W vehicle although it would reach the box first.
  w.vehicles.push_back(make_vehicle(0, sn, 40.0, 4.0, 1.0));
  w.vehicles.push_back(make_vehicle(1, we, 40.0, 10.0, 2.0));

  bool later_held = false;
  const double t = run_until(w, fifo, 0.1, 40.0, [&](const World& world) {
    const Vehicle& first = world.vehicles[0];
    const Vehicle& later = world.vehicles[1];
    if (later.st.v < 0.1 && !first.committed) REQUIRE(false);  // held without cause
    if (later.st.v < 0.5 && later.st.front_s() > 65.0) later_held = true;
    return later.st.rear_s() > rel->a_clear_end;
  });
  CHECK(t > 0.0);
  CHECK(later_held);
  // Earlier vehicle must have cleared before the later entered the interval.
  CHECK(w.vehicles[0].st.rear_s() > rel->b_clear_end);
}

TEST_CASE("efifo: non-conflicting vehicles proceed simultaneously") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int ws = route_id(layout, "W_S_right");
  const int en = route_id(layout, "E_N_right");
  CHECK(!layout.conflict(ws, en).has_value());  // opposite right turns

  ControllerConfig cfg;
  EFifoController efifo(cfg);
  World w;
  w.layout = &layout;
  w.vehicles.push_back(make_vehicle(0, ws, 40.0, 10.0, 1.0));
  w.vehicles.push_back(make_vehicle(1, en, 40.0, 10.0, 2.0));
  double min_v = kInf;
  run_until(w, efifo, 0.1, 15.0, [&](const World& world) {
    for (const Vehicle& v : world.vehicles) min_v = std::min(min_v, v.st.v);
    return world.vehicles[0].st.s > 85.0 && world.vehicles[1].st.s > 85.0;
  });
  CHECK(min_v > 5.0);  // nobody was halted
}

TEST_CASE("efifo: nearer convoy passes before a farther rival") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int we = route_id(layout, "W_E_through");
  const int sn = route_id(layout, "S_N_through");
  const auto rel = layout.conflict(sn, we);
  REQUIRE(rel.has_value());

  ControllerConfig cfg;
  EFifoController efifo(cfg);
  World w;
  w.layout = &layout;
  // Convoy of three nose to tail on the main road, side vehicle slightly
  // farther: the whole convoy crosses first although the side vehicle arrived
  // earlier.
  w.vehicles.push_back(make_vehicle(0, sn, 48.0, 8.0, 0.5));
  w.vehicles.push_back(make_vehicle(1, we, 55.0, 8.0, 1.0));
  w.vehicles.push_back(make_vehicle(2, we, 47.0, 8.0, 1.1));
  w.vehicles.push_back(make_vehicle(3, we, 39.0, 8.0, 1.2));

  const double t = run_until(w, efifo, 0.1, 40.0, [&](const World& world) {
    return world.vehicles[0].st.rear_s() > rel->a_clear_end;
  });
  CHECK(t > 0.0);
  // All convoy members cleared before the side vehicle did.
  for (int i = 1; i <= 3; ++i)
    CHECK(w.vehicles[static_cast<std::size_t>(i)].st.rear_s() > rel->b_clear_end);
}

TEST_CASE("efifo: equal distances fall back to the arrival stamp") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int we = route_id(layout, "W_E_through");
  const int sn = route_id(layout, "S_N_through");
  ControllerConfig cfg;
  EFifoController efifo(cfg);
  World w;
  w.layout = &layout;
  w.vehicles.push_back(make_vehicle(0, we, 50.0, 8.0, 2.0));  // later stamp
  w.vehicles.push_back(make_vehicle(1, sn, 50.0, 8.0, 1.0));  // earlier stamp wins
  const auto rel = layout.conflict(sn, we);
  const double t = run_until(w, efifo, 0.1, 30.0, [&](const World& world) {
    return world.vehicles[1].st.rear_s() > rel->a_clear_end;
  });
  CHECK(t > 0.0);
  CHECK(w.vehicles[0].st.front_s() < rel->b_begin + 1.0);  // the later one waited
}

TEST_CASE("priority rules") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int sn = route_id(layout, "S_N_through");
  const int we = route_id(layout, "W_E_through");
  ControllerConfig cfg;

  SUBCASE("time_to_cover arithmetic") {
    const dynamics::MotionLimits lim;
    CHECK(time_to_cover(100.0, 10.0, lim) == doctest::Approx(10.0));
    CHECK(time_to_cover(0.0, 5.0, lim) == 0.0);
    // From standstill: accelerate at 3 to v_max 10 (16.67 m), then cruise.
    const double accel_part = (-0.0 + std::sqrt(2.0 * 3.0 * 100.0 / 9.0)) / 3.0;
    (void)accel_part;
    const double d_accel = 100.0 / 6.0;
    const double expect = 10.0 / 3.0 + (30.0 - d_accel) / 10.0;
    CHECK(time_to_cover(30.0, 0.0, lim) == doctest::Approx(expect));
  }
  SUBCASE("empty main road: side vehicle never slows down") {
    PriorityController pr(cfg);
    World w;
    w.layout = &layout;
    w.vehicles.push_back(make_vehicle(0, sn, 30.0, 10.0, 1.0));
    double min_v = kInf;
    run_until(w, pr, 0.1, 12.0, [&](const World& world) {
      min_v = std::min(min_v, world.vehicles[0].st.v);
      return world.vehicles[0].st.s > 90.0;
    });
    CHECK(min_v > 9.0);
  }
  SUBCASE("distant main vehicle: accepted gap, side proceeds") {
    PriorityController pr(cfg);
    World w;
    w.layout = &layout;
    const auto rel = layout.conflict(we, sn);
    REQUIRE(rel.has_value());
    w.vehicles.push_back(make_vehicle(0, we, rel->a_begin - 100.0 - 2.5, 10.0, 0.5));
    w.vehicles.push_back(make_vehicle(1, sn, 70.0, 3.0, 1.0));
    const auto acc = pr.step(w);
    CHECK(acc[1] > 0.0);  // accelerates rather than braking for the halt point
  }
  SUBCASE("continuous main stream: side vehicle waits") {
    PriorityController pr(cfg);
    World w;
    w.layout = &layout;
    // Main vehicles every 25 m approaching at speed.
    for (int k = 0; k < 6; ++k)
      w.vehicles.push_back(make_vehicle(k, we, 70.0 - 25.0 * k, 10.0, 0.1 * k));
    w.vehicles.push_back(make_vehicle(99, sn, 60.0, 8.0, 0.05));
    bool side_stopped = false;
    run_until(w, pr, 0.1, 12.0, [&](const World& world) {
      const Vehicle& side = world.vehicles.back();
      if (side.st.v < 0.05) side_stopped = true;
      return false;
    });
    CHECK(side_stopped);
    CHECK(w.vehicles.back().st.front_s() < 75.5);
  }
}
