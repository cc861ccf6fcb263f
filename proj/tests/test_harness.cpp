#include <cmath>

#include "aim/harness.hpp"
#include "doctest.h"

using namespace aim;
using namespace aim::harness;

TEST_CASE("spawn_stream: shifted exponential with the requested mean") {
  Rng rng(42);
  // lane rate 0.1 veh/s (a side lane at demand 0.2): mean inter-arrival 10 s.
  const auto arrivals = spawn_stream(0.1, 1.0, 1.0e6, rng);
  REQUIRE(arrivals.size() > 90000);
  double sum = arrivals[0];
  for (std::size_t i = 1; i < arrivals.size(); ++i) sum += arrivals[i] - arrivals[i - 1];
  const double mean = sum / static_cast<double>(arrivals.size());
  CHECK(std::abs(mean - 10.0) / 10.0 < 0.01);
  // Shift: no inter-arrival below t_shift.
  for (std::size_t i = 1; i < 1000; ++i) CHECK(arrivals[i] - arrivals[i - 1] >= 1.0);

  CHECK(spawn_stream(0.0, 1.0, 100.0, rng).empty());
  CHECK_THROWS_AS(spawn_stream(1.5, 1.0, 100.0, rng), std::invalid_argument);
}

TEST_CASE("zero demand: zero flow, zero collisions") {
  ScenarioConfig sc;
  sc.layout = geometry::LayoutKind::M;
  sc.controller = "efifo";
  sc.demand = 0.0;
  sc.duration = 50.0;
  const MetricsRecord m = run_episode(sc);
  CHECK(m.spawned == 0);
  CHECK(m.flow_rate == 0.0);
  CHECK(m.collision_count == 0);
}

TEST_CASE("free-flow duration matches closed-form kinematics") {
  // One vehicle spawned at v0 on a green corridor: duration = complete_s / v0.
  const auto layout = geometry::build_layout(geometry::LayoutKind::L);
  baselines::ControllerConfig cc;
  baselines::TrafficLightController tl(cc, layout);
  World w;
  w.layout = &layout;
  int we = -1;
  for (const auto& r : layout.routes)
    if (r.name == "W_E_through") we = r.id;
  Vehicle veh;
  veh.st.id = 0;
  veh.st.route = we;
  veh.st.s = 0.0;
  veh.st.v = 10.0;
  w.vehicles.push_back(veh);

  const double expect = layout.route(we).complete_s / 10.0;
  double t = 0.0;
  while (w.vehicles[0].st.s < layout.route(we).complete_s) {
    const auto acc = tl.step(w);
    w.vehicles[0].st = dynamics::step_vehicle(w.vehicles[0].st, acc[0], 0.1);
    w.time += 0.1;
    t += 0.1;
    REQUIRE(t < 30.0);
  }
  CHECK(std::abs(t - expect) < 0.2);
  CHECK(expect == doctest::Approx(10.3));  // spawn 75 m out, 8 m box, +20 m
}

TEST_CASE("episode determinism: identical seeds, identical records") {
  for (const char* ctrl : {"efifo", "tl"}) {
    ScenarioConfig sc;
    sc.layout = geometry::LayoutKind::L;
    sc.controller = ctrl;
    sc.demand = 0.2;
    sc.duration = 60.0;
    sc.seed = 99;
    const MetricsRecord a = run_episode(sc);
    const MetricsRecord b = run_episode(sc);
    CHECK(a.flow_rate == b.flow_rate);
    CHECK(a.spawned == b.spawned);
    CHECK(a.completed == b.completed);
    REQUIRE(a.durations.size() == b.durations.size());
    for (std::size_t i = 0; i < a.durations.size(); ++i)
      CHECK(a.durations[i] == b.durations[i]);
    CHECK(a.stop_flags == b.stop_flags);
  }
}

TEST_CASE("conservation: spawned = completed + active + collided") {
  for (const char* ctrl : {"tl", "fifo", "efifo", "pr"}) {
    ScenarioConfig sc;
    sc.layout = geometry::LayoutKind::M;
    sc.controller = ctrl;
    sc.demand = 0.22;
    sc.duration = 80.0;
    sc.seed = 3;
    const MetricsRecord m = run_episode(sc);
    CHECK(m.spawned == m.completed + m.active_at_end + m.collision_count);
    CHECK_MESSAGE(!m.safety_violation, ctrl << " produced a collision");
    CHECK(m.spawned > 5);
  }
}

TEST_CASE("stop flags: red-phase arrival stops, free green flow does not") {
  ScenarioConfig sc;
  sc.layout = geometry::LayoutKind::L;
  sc.controller = "tl";
  sc.demand = 0.08;
  sc.duration = 100.0;
  sc.seed = 11;
  const MetricsRecord m = run_episode(sc);
  REQUIRE(m.completed > 3);
  bool any_stop = false, any_free = false;
  for (bool s : m.stop_flags) (s ? any_stop : any_free) = true;
  CHECK(any_stop);
  CHECK(any_free);
}

TEST_CASE("low demand: controller medians agree within 10 percent") {
  BaselineProtocolConfig bc;
  bc.layout = geometry::LayoutKind::L;
  bc.controllers = {"tl", "fifo", "efifo", "pr"};
  bc.demand_lo = 0.05;
  bc.demand_hi = 0.05;
  bc.runs = 16;
  bc.seed = 4;
  const auto result = baseline_protocol(bc);
  std::map<std::string, std::vector<double>> flows;
  for (const auto& row : result.rows) {
    flows[row.controller].push_back(row.metrics.flow_rate);
    CHECK(!row.metrics.safety_violation);
  }
  double lo = kInf, hi = -kInf;
  for (auto& [ctrl, values] : flows) {
    const double med = median(values);
    lo = std::min(lo, med);
    hi = std::max(hi, med);
  }
  CHECK((hi - lo) / hi < 0.10);
}

TEST_CASE("efifo median flow rate dominates fifo on matched seeds") {
  BaselineProtocolConfig bc;
  bc.layout = geometry::LayoutKind::L;
  bc.controllers = {"fifo", "efifo"};
  bc.demand_lo = 0.05;
  bc.demand_hi = 0.3;
  bc.runs = 24;
  bc.seed = 21;
  const auto result = baseline_protocol(bc);
  std::map<std::string, std::vector<double>> flows;
  for (const auto& row : result.rows) flows[row.controller].push_back(row.metrics.flow_rate);
  CHECK(median(flows["efifo"]) >= median(flows["fifo"]));
}

TEST_CASE("rl controller: random-init policy runs and is deterministic") {
  const auto weights = policy::init_policy(7);
  const std::string path = "/tmp/aim_rl_test_weights.bin";
  policy::save_weights(weights, path);

  ScenarioConfig sc;
  sc.layout = geometry::LayoutKind::M;
  sc.controller = "rl";
  sc.weights_file = path;
  sc.demand = 0.15;
  sc.duration = 40.0;
  sc.seed = 5;
  const MetricsRecord a = run_episode(sc);
  const MetricsRecord b = run_episode(sc);
  CHECK(a.spawned == b.spawned);
  CHECK(a.flow_rate == b.flow_rate);
  CHECK(a.collision_count == b.collision_count);
  CHECK(a.spawned > 0);
  std::remove(path.c_str());
}

TEST_CASE("crossval protocol produces complete matrices") {
  const std::string base = "/tmp/aim_cv_";
  CrossvalConfig cc;
  using geometry::LayoutKind;
  for (auto [kind, tag] : {std::pair{LayoutKind::S, "s"}, {LayoutKind::M, "m"},
                           {LayoutKind::L, "l"}, {LayoutKind::XL, "xl"}}) {
    const std::string path = base + tag + ".bin";
    policy::save_weights(policy::init_policy(static_cast<std::uint64_t>(kind) + 1), path);
    cc.weights[kind] = path;
  }
  cc.runs = 2;
  cc.duration = 30.0;
  cc.seed = 8;
  const auto result = crossval_protocol(cc);
  int cells = 0;
  for (const auto& [model, row] : result.collision_percent) {
    for (const auto& [eval, value] : row) {
      CHECK(std::isfinite(value));
      CHECK(std::isfinite(result.avg_flow.at(model).at(eval)));
      ++cells;
    }
  }
  CHECK(cells == 16);
  CHECK(result.rows.size() == 32);
}
