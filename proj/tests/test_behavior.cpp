#include <cmath>

#include "aim/behavior.hpp"
#include "aim/dynamics.hpp"
#include "doctest.h"

using namespace aim;
using namespace aim::behavior;

namespace {

World make_world(const geometry::IntersectionLayout& layout) {
  World w;
  w.layout = &layout;
  return w;
}

Vehicle make_vehicle(int id, int route, double s, double v) {
  Vehicle veh;
  veh.st.id = id;
  veh.st.route = route;
  veh.st.s = s;
  veh.st.v = v;
  return veh;
}

int route_id(const geometry::IntersectionLayout& l, const std::string& name) {
  for (const auto& r : l.routes)
    if (r.name == name) return r.id;
  REQUIRE(false);
  return -1;
}

}  // namespace

TEST_CASE("idm_accel fixed points and oracle value") {
  CfParams p;
  const dynamics::MotionLimits lim;

  // Free flow at desired speed.
  CHECK(idm_accel(10.0, {kInf, 0.0, LeaderSource::None}, p, lim) == doctest::Approx(0.0));
  // Standing at the minimum gap: s* = s0 cancels exactly.
  CHECK(idm_accel(0.0, {2.0, 0.0, LeaderSource::Real}, p, lim) == doctest::Approx(0.0));
  // Independent scalar evaluation: v=5, gap=20, leader 5.
  const double expect = 3.0 * (1.0 - std::pow(0.5, 4.0) - std::pow(9.5 / 20.0, 2.0));
  CHECK(idm_accel(5.0, {20.0, 5.0, LeaderSource::Real}, p, lim) == doctest::Approx(expect));
  CHECK(expect == doctest::Approx(2.135625));
  // Emergency clamp.
  CHECK(idm_accel(5.0, {0.0, 0.0, LeaderSource::Real}, p, lim) == lim.a_min);
}

TEST_CASE("idm equilibrium platoon holds still") {
  CfParams p;
  const dynamics::MotionLimits lim;
  for (double v : {2.0, 5.0, 8.0}) {
    const double s_star = p.s0 + v * p.T;  // dv = 0
    const double gap_eq = s_star / std::sqrt(1.0 - std::pow(v / p.v0, p.delta));
    CHECK(std::abs(idm_accel(v, {gap_eq, v, LeaderSource::Real}, p, lim)) < 1e-6);
  }
}

TEST_CASE("idm monotonicity over a grid") {
  CfParams p;
  const dynamics::MotionLimits lim;
  for (double leader_v : {0.0, 5.0, 10.0}) {
    for (double gap = 4.0; gap <= 60.0; gap += 7.0) {
      double prev = kInf;
      for (double v = 0.0; v <= 10.0; v += 0.5) {
        const double a = idm_accel(v, {gap, leader_v, LeaderSource::Real}, p, lim);
        CHECK(a <= prev + 1e-12);
        prev = a;
      }
    }
    for (double v : {0.0, 3.0, 7.0}) {
      double prev = -kInf;
      for (double gap = 2.0; gap <= 80.0; gap += 2.0) {
        const double a = idm_accel(v, {gap, leader_v, LeaderSource::Real}, p, lim);
        CHECK(a >= prev - 1e-12);
        prev = a;
      }
    }
  }
}

TEST_CASE("eidm drive-off reacts after the configured delay") {
  CfParams p;
  const dynamics::MotionLimits lim;
  CfMemory mem;
  // Stopped behind a leader at standstill gap.
  CHECK(eidm_accel(0.0, {2.0, 0.0, LeaderSource::Real}, p, lim, mem, 0.0) ==
        doctest::Approx(0.0));
  // Leader departs; gap opens. Reaction held for driveoff_delay.
  CHECK(eidm_accel(0.0, {6.0, 5.0, LeaderSource::Real}, p, lim, mem, 0.1) == 0.0);
  CHECK(eidm_accel(0.0, {8.0, 6.0, LeaderSource::Real}, p, lim, mem, 0.3) == 0.0);
  const double launch = eidm_accel(0.0, {10.0, 7.0, LeaderSource::Real}, p, lim, mem, 0.7);
  CHECK(launch > 0.5);
}

TEST_CASE("eidm equals idm outside drive-off") {
  CfParams p;
  const dynamics::MotionLimits lim;
  CfMemory mem;
  // Cruising at v0 on a free road.
  CHECK(eidm_accel(10.0, {kInf, 0.0, LeaderSource::None}, p, lim, mem, 3.0) ==
        doctest::Approx(0.0));
  // Random-ish cruising states.
  for (double v : {3.0, 6.0, 9.0}) {
    for (double gap : {8.0, 25.0, 70.0}) {
      CfMemory fresh;
      const LeaderView view{gap, 0.7 * v, LeaderSource::Real};
      CHECK(eidm_accel(v, view, p, lim, fresh, 12.0) ==
            idm_accel(v, view, p, lim));
    }
  }
}

TEST_CASE("resolve_leader halt-point substitution") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int we = route_id(layout, "W_E_through");

  SUBCASE("yielding with no leader sees the halt point") {
    World w = make_world(layout);
    w.vehicles.push_back(make_vehicle(0, we, 42.5, 5.0));  // front bumper at 45
    const LeaderView v = resolve_leader(w, 0, false);
    CHECK(v.source == LeaderSource::VirtualHalt);
    CHECK(v.gap == doctest::Approx(30.0));
    CHECK(v.leader_speed == 0.0);
  }
  SUBCASE("nearby real leader wins over the halt point") {
    World w = make_world(layout);
    w.vehicles.push_back(make_vehicle(0, we, 42.5, 5.0));
    w.vehicles.push_back(make_vehicle(1, we, 57.5, 4.0));  // 15 m ahead center to center
    const LeaderView v = resolve_leader(w, 0, false);
    CHECK(v.source == LeaderSource::Real);
    CHECK(v.gap == doctest::Approx(10.0));
    CHECK(v.leader_speed == doctest::Approx(4.0));
  }
  SUBCASE("right of way keeps the free road") {
    World w = make_world(layout);
    w.vehicles.push_back(make_vehicle(0, we, 42.5, 5.0));
    const LeaderView v = resolve_leader(w, 0, true);
    CHECK(v.source == LeaderSource::None);
    CHECK(std::isinf(v.gap));
  }
}

TEST_CASE("find_leader sees merged vehicles on a shared exit lane") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int we = route_id(layout, "W_E_through");
  const int se = route_id(layout, "S_E_right");
  const geometry::ExitMerge* m = layout.merge(se, we);
  REQUIRE(m != nullptr);
  const double se_suffix = m->route_a == se ? m->a_suffix_start : m->b_suffix_start;
  const double we_suffix = m->route_a == we ? m->a_suffix_start : m->b_suffix_start;

  World w = make_world(layout);
  w.vehicles.push_back(make_vehicle(0, se, se_suffix - 6.0, 6.0));   // ego, pre-merge
  w.vehicles.push_back(make_vehicle(1, we, we_suffix + 4.0, 2.0));   // merged leader
  const LeaderView v = find_leader(w, 0);
  CHECK(v.source == LeaderSource::Real);
  CHECK(v.gap == doctest::Approx(6.0 + 4.0 - 5.0));
  CHECK(v.leader_speed == doctest::Approx(2.0));
}

TEST_CASE("find_leader on a shared approach prefix") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int we = route_id(layout, "W_E_through");
  const int wn = route_id(layout, "W_N_left");
  World w = make_world(layout);
  w.vehicles.push_back(make_vehicle(0, we, 30.0, 8.0));
  w.vehicles.push_back(make_vehicle(1, wn, 48.0, 8.0));  // ahead on the shared lane
  const LeaderView v = find_leader(w, 0);
  CHECK(v.source == LeaderSource::Real);
  CHECK(v.gap == doctest::Approx(18.0 - 5.0));
}

TEST_CASE("single-lane stress: no rear-end collisions over 200 s") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  const int we = route_id(layout, "W_E_through");
  const auto& route = layout.route(we);
  const dynamics::MotionLimits lim;
  CfParams p;
  const double dt = 0.1;

  World w = make_world(layout);
  int next_id = 0;
  double next_spawn = 0.0;
  Rng rng(99);

  for (int step = 0; step < 2000; ++step) {
    w.time = step * dt;
    if (w.time >= next_spawn) {
      bool clear = true;
      for (const Vehicle& v : w.vehicles)
        if (v.st.rear_s() < 10.0) clear = false;
      if (clear) {
        w.vehicles.push_back(make_vehicle(next_id++, we, 0.0, rng.uniform(3.0, 10.0)));
        next_spawn = w.time + rng.uniform(1.0, 4.0);
      }
    }
    std::vector<double> acc(w.vehicles.size(), 0.0);
    for (std::size_t i = 0; i < w.vehicles.size(); ++i) {
      Vehicle& v = w.vehicles[i];
      if (v.st.id == 0) {
        // Scripted lead vehicle: stop-and-go cycles, the worst case for
        // followers (tests both braking and drive-off).
        const double phase = std::fmod(w.time, 40.0);
        acc[i] = phase < 12.0 ? 1.5 : (phase < 20.0 ? -4.0 : (phase < 26.0 ? 0.0 : 2.0));
      } else {
        acc[i] = cf_accel(v.st.v, find_leader(w, i), p, lim, v.cf, w.time);
      }
    }
    for (std::size_t i = 0; i < w.vehicles.size(); ++i)
      w.vehicles[i].st = dynamics::step_vehicle(w.vehicles[i].st, acc[i], dt, lim);
    std::erase_if(w.vehicles, [&](const Vehicle& v) { return v.st.s >= route.length - 1.0; });

    std::vector<dynamics::VehicleState> states;
    for (const Vehicle& v : w.vehicles) states.push_back(v.st);
    const auto collisions = dynamics::check_collisions(states, layout);
    REQUIRE_MESSAGE(collisions.empty(), "rear-end collision at t=" << w.time);
  }
  CHECK(next_id > 20);
}
