#include "aim/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace aim::baselines {

using behavior::LeaderSource;
using behavior::LeaderView;

SignalPlan SignalPlan::for_layout(const geometry::IntersectionLayout& layout, double main_green,
                                  double side_green, double yellow) {
  std::vector<int> groups;
  for (const auto& lane : layout.lanes)
    if (lane.approach && lane.signal_group >= 0 &&
        std::find(groups.begin(), groups.end(), lane.signal_group) == groups.end())
      groups.push_back(lane.signal_group);
  std::sort(groups.begin(), groups.end());

  SignalPlan plan;
  for (int g : groups) {
    plan.phases.push_back({g, g == 0 ? main_green : side_green, yellow});
    plan.cycle_length += plan.phases.back().green + plan.phases.back().yellow;
  }
  return plan;
}

SignalState signal_state(const SignalPlan& plan, double t, int signal_group) {
  double offset = std::fmod(t, plan.cycle_length);
  if (offset < 0.0) offset += plan.cycle_length;
  for (const SignalPhase& phase : plan.phases) {
    if (offset < phase.green + phase.yellow) {
      if (phase.group != signal_group) return SignalState::Red;
      return offset < phase.green ? SignalState::Green : SignalState::Yellow;
    }
    offset -= phase.green + phase.yellow;
  }
  return SignalState::Red;
}

double time_to_cover(double dist, double v, const dynamics::MotionLimits& limits) {
  if (dist <= 0.0) return 0.0;
  const double a = limits.a_max;
  const double accel_dist = (limits.v_max * limits.v_max - v * v) / (2.0 * a);
  if (dist <= accel_dist)
    return (-v + std::sqrt(v * v + 2.0 * a * dist)) / a;
  return (limits.v_max - v) / a + (dist - accel_dist) / limits.v_max;
}

namespace {

// Later-arrival order: unstamped vehicles sort last.
std::tuple<double, int, int> stamp_key(const Vehicle& v) {
  const double stamp = v.arrival_stamp < 0.0 ? kInf : v.arrival_stamp;
  return {stamp, v.arrival_seq, v.st.id};
}

bool cleared_side(const Vehicle& v, double clear_end) { return v.st.rear_s() > clear_end; }

bool past_halt(const Vehicle& v, const geometry::Route& r) {
  return v.st.front_s() > r.halt_s;
}

// Commit when the front bumper will cross the halt point within the next step.
bool crossing_halt_now(const Vehicle& v, const geometry::Route& r, double dt) {
  return v.st.front_s() + std::max(v.st.v * dt, 0.5) >= r.halt_s;
}

void update_grants(ReservationLedger& ledger, const World& world) {
  ledger.arrival.clear();
  for (const Vehicle& v : world.vehicles)
    if (v.arrival_stamp >= 0.0) ledger.arrival[v.st.id] = v.arrival_stamp;
  ledger.grant.clear();
  const auto& conflicts = world.layout->conflicts;
  for (std::size_t c = 0; c < conflicts.size(); ++c) {
    const auto& rel = conflicts[c];
    if (rel.kind != geometry::ConflictKind::Crossing) continue;
    for (const Vehicle& v : world.vehicles) {
      if (!v.committed) continue;
      if (v.st.route == rel.route_a && !cleared_side(v, rel.a_clear_end))
        ledger.grant[static_cast<int>(c)] = v.st.id;
      else if (v.st.route == rel.route_b && !cleared_side(v, rel.b_clear_end))
        ledger.grant[static_cast<int>(c)] = v.st.id;
    }
  }
}

}  // namespace

std::vector<double> CarFollowingController::step(World& world) {
  std::vector<double> acc(world.vehicles.size(), 0.0);
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    Vehicle& v = world.vehicles[i];
    acc[i] = behavior::cf_accel(v.st.v, behavior::resolve_leader(world, i, true), cfg_.cf,
                                cfg_.limits, v.cf, world.time);
  }
  return acc;
}

TrafficLightController::TrafficLightController(const ControllerConfig& cfg,
                                               const geometry::IntersectionLayout& layout)
    : cfg_(cfg), plan_(SignalPlan::for_layout(layout)) {}

std::vector<double> TrafficLightController::step(World& world) {
  const geometry::IntersectionLayout& layout = *world.layout;
  std::vector<double> acc(world.vehicles.size(), 0.0);

  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    Vehicle& ego = world.vehicles[i];
    const geometry::Route& route = world.route_of(ego);
    LeaderView view = behavior::find_leader(world, i);

    if (!past_halt(ego, route)) {
      const SignalState st =
          signal_state(plan_, world.time, layout.lane(route.approach_lane).signal_group);
      bool must_stop = st == SignalState::Red;
      if (st == SignalState::Yellow) {
        // Stop if that is possible with comfortable deceleration.
        const double dist = route.halt_s - ego.st.front_s();
        must_stop = dist <= 0.0 || ego.st.v * ego.st.v / (2.0 * dist) <= cfg_.cf.b;
      }
      if (must_stop)
        view = behavior::with_virtual_stop(world, i, route.halt_s, view,
                                           LeaderSource::SignalStop);
    }

    // Left turns yield inside the box to conflicting traffic that can still
    // reach the shared conflict.
    if (route.turn == geometry::TurnType::Left) {
      double yield_s = kInf;
      for (int rel_idx : layout.conflicts_of(route.id)) {
        const auto& stored = layout.conflicts[static_cast<std::size_t>(rel_idx)];
        if (stored.kind != geometry::ConflictKind::Crossing) continue;
        const auto rel = layout.conflict(route.id, stored.route_a == route.id
                                                        ? stored.route_b
                                                        : stored.route_a);
        if (cleared_side(ego, rel->a_clear_end)) continue;
        if (ego.st.front_s() > rel->a_begin + 0.3) continue;  // already entered, keep going
        const double t_need =
            time_to_cover(rel->a_clear_end + 0.5 * ego.st.length - ego.st.s, ego.st.v,
                          cfg_.limits);
        for (std::size_t j = 0; j < world.vehicles.size(); ++j) {
          const Vehicle& other = world.vehicles[j];
          if (other.st.route != rel->route_b) continue;
          if (cleared_side(other, rel->b_clear_end)) continue;
          const geometry::Route& other_route = world.route_of(other);
          if (other_route.turn == geometry::TurnType::Left &&
              stamp_key(ego) < stamp_key(other))
            continue;  // opposing left with the later key yields to us
          const bool inside = other.st.front_s() > rel->b_begin;
          const double eta =
              (rel->b_begin - other.st.front_s()) / std::max(other.st.v, 0.3);
          const bool approaching =
              other.st.v > 0.3 && eta < t_need + cfg_.threat_margin;
          if (inside || approaching) {
            yield_s = std::min(yield_s, std::max(route.halt_s + 0.5,
                                                 rel->a_begin - cfg_.yield_setback));
            break;
          }
        }
      }
      if (std::isfinite(yield_s) && ego.st.front_s() < yield_s + 0.3)
        view = behavior::with_virtual_stop(world, i, yield_s, view, LeaderSource::VirtualHalt);
    }

    acc[i] = behavior::cf_accel(ego.st.v, view, cfg_.cf, cfg_.limits, ego.cf, world.time);
  }
  return acc;
}

std::vector<double> FifoController::step(World& world) {
  const geometry::IntersectionLayout& layout = *world.layout;
  std::vector<double> acc(world.vehicles.size(), 0.0);

  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    Vehicle& ego = world.vehicles[i];
    const geometry::Route& route = world.route_of(ego);
    bool blocked = false;
    if (!ego.committed) {
      for (int rel_idx : layout.conflicts_of(route.id)) {
        const auto& stored = layout.conflicts[static_cast<std::size_t>(rel_idx)];
        if (stored.kind != geometry::ConflictKind::Crossing) continue;
        const int partner =
            stored.route_a == route.id ? stored.route_b : stored.route_a;
        const auto rel = layout.conflict(route.id, partner);
        for (const Vehicle& other : world.vehicles) {
          if (other.st.route != partner || other.st.id == ego.st.id) continue;
          if (other.arrival_stamp < 0.0) continue;  // not yet appeared
          if (stamp_key(other) < stamp_key(ego) && !cleared_side(other, rel->b_clear_end)) {
            blocked = true;
            break;
          }
        }
        if (blocked) break;
      }
      if (!blocked && crossing_halt_now(ego, route, cfg_.dt)) ego.committed = true;
    }
    const LeaderView view = behavior::resolve_leader(world, i, ego.committed || !blocked);
    acc[i] = behavior::cf_accel(ego.st.v, view, cfg_.cf, cfg_.limits, ego.cf, world.time);
  }
  update_grants(ledger_, world);
  return acc;
}

namespace {

// Distance to the halt point, chained through a same-lane convoy: a vehicle
// tied into a queue ahead inherits the head's priority.
double efifo_effective_distance(const World& world, std::size_t idx, double convoy_gap) {
  const geometry::Route& route = world.route_of(world.vehicles[idx]);
  double eff = route.halt_s - world.vehicles[idx].st.s;
  std::size_t cur = idx;
  for (std::size_t hops = 0; hops < world.vehicles.size(); ++hops) {
    double best_gap = kInf;
    std::size_t best = cur;
    for (std::size_t j = 0; j < world.vehicles.size(); ++j) {
      if (j == cur) continue;
      const auto gap = behavior::path_gap(world, cur, j);
      if (gap && *gap < best_gap) {
        best_gap = *gap;
        best = j;
      }
    }
    const Vehicle& cur_v = world.vehicles[cur];
    if (best == cur) break;
    const Vehicle& lead = world.vehicles[best];
    const double bumper = best_gap - 0.5 * (cur_v.st.length + lead.st.length);
    if (bumper >= convoy_gap) break;
    const geometry::Route& lead_route = world.route_of(lead);
    eff = std::min(eff, lead_route.halt_s - lead.st.s);
    cur = best;
  }
  return eff;
}

}  // namespace

std::vector<double> EFifoController::step(World& world) {
  const geometry::IntersectionLayout& layout = *world.layout;
  std::vector<double> acc(world.vehicles.size(), 0.0);

  std::vector<double> eff_dist(world.vehicles.size());
  for (std::size_t i = 0; i < world.vehicles.size(); ++i)
    eff_dist[i] = efifo_effective_distance(world, i, cfg_.convoy_gap);

  auto key = [&](std::size_t i) {
    const Vehicle& v = world.vehicles[i];
    const auto [stamp, seq, id] = stamp_key(v);
    return std::tuple<double, double, int, int>{eff_dist[i], stamp, seq, id};
  };

  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    Vehicle& ego = world.vehicles[i];
    const geometry::Route& route = world.route_of(ego);
    bool blocked = false;
    if (!ego.committed) {
      for (int rel_idx : layout.conflicts_of(route.id)) {
        const auto& stored = layout.conflicts[static_cast<std::size_t>(rel_idx)];
        if (stored.kind != geometry::ConflictKind::Crossing) continue;
        const int partner = stored.route_a == route.id ? stored.route_b : stored.route_a;
        const auto rel = layout.conflict(route.id, partner);
        for (std::size_t j = 0; j < world.vehicles.size(); ++j) {
          const Vehicle& other = world.vehicles[j];
          if (other.st.route != partner || other.st.id == ego.st.id) continue;
          if (cleared_side(other, rel->b_clear_end)) continue;
          if (other.committed) {
            blocked = true;
          } else if (other.arrival_stamp >= 0.0) {
            if (eff_dist[j] == eff_dist[i] && std::get<1>(key(j)) != std::get<1>(key(i)))
              ++stamp_tiebreaks_;
            if (key(j) < key(i)) blocked = true;
          }
          if (blocked) break;
        }
        if (blocked) break;
      }
      if (!blocked && crossing_halt_now(ego, route, cfg_.dt)) ego.committed = true;
    }
    const LeaderView view = behavior::resolve_leader(world, i, ego.committed || !blocked);
    acc[i] = behavior::cf_accel(ego.st.v, view, cfg_.cf, cfg_.limits, ego.cf, world.time);
  }
  update_grants(ledger_, world);
  return acc;
}

namespace {

bool prioritized(const geometry::Route& r) {
  return r.priority == geometry::PriorityClass::Main && r.turn != geometry::TurnType::Left;
}

}  // namespace

std::vector<double> PriorityController::step(World& world) {
  const geometry::IntersectionLayout& layout = *world.layout;
  std::vector<double> acc(world.vehicles.size(), 0.0);

  auto minor_key = [&](std::size_t i) {
    const Vehicle& v = world.vehicles[i];
    const geometry::Route& r = world.route_of(v);
    const auto [stamp, seq, id] = stamp_key(v);
    return std::tuple<double, double, int, int>{r.halt_s - v.st.s, stamp, seq, id};
  };

  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    Vehicle& ego = world.vehicles[i];
    const geometry::Route& route = world.route_of(ego);

    if (prioritized(route) || ego.committed) {
      acc[i] = behavior::cf_accel(ego.st.v, behavior::resolve_leader(world, i, true), cfg_.cf,
                                  cfg_.limits, ego.cf, world.time);
      continue;
    }

    bool pass = true;
    for (int rel_idx : layout.conflicts_of(route.id)) {
      const auto& stored = layout.conflicts[static_cast<std::size_t>(rel_idx)];
      if (stored.kind != geometry::ConflictKind::Crossing) continue;
      const int partner = stored.route_a == route.id ? stored.route_b : stored.route_a;
      const auto rel = layout.conflict(route.id, partner);
      if (cleared_side(ego, rel->a_clear_end)) continue;
      const geometry::Route& partner_route = layout.route(partner);
      const double t_need = time_to_cover(
          rel->a_clear_end + 0.5 * ego.st.length - ego.st.s, ego.st.v, cfg_.limits);

      for (std::size_t j = 0; j < world.vehicles.size() && pass; ++j) {
        const Vehicle& other = world.vehicles[j];
        if (other.st.route != partner || other.st.id == ego.st.id) continue;
        if (cleared_side(other, rel->b_clear_end)) continue;
        if (prioritized(partner_route)) {
          if (other.st.front_s() > rel->b_begin) {
            pass = false;  // already inside the shared conflict
            break;
          }
          // Earliest possible arrival: accelerate to v_max.
          const double eta =
              time_to_cover(rel->b_begin - other.st.front_s(), other.st.v, cfg_.limits);
          if (eta < t_need + cfg_.pr_gap_margin) pass = false;
        } else {
          if (other.committed) {
            pass = false;
          } else if (other.arrival_stamp >= 0.0 && minor_key(j) < minor_key(i)) {
            pass = false;
          }
        }
      }
      if (!pass) break;
    }
    if (pass && crossing_halt_now(ego, route, cfg_.dt)) ego.committed = true;
    const LeaderView view = behavior::resolve_leader(world, i, ego.committed || pass);
    acc[i] = behavior::cf_accel(ego.st.v, view, cfg_.cf, cfg_.limits, ego.cf, world.time);
  }
  return acc;
}

std::unique_ptr<Controller> make_controller(const std::string& name, const ControllerConfig& cfg,
                                            const geometry::IntersectionLayout& layout) {
  if (name == "cf") return std::make_unique<CarFollowingController>(cfg);
  if (name == "tl") return std::make_unique<TrafficLightController>(cfg, layout);
  if (name == "fifo") return std::make_unique<FifoController>(cfg);
  if (name == "efifo") return std::make_unique<EFifoController>(cfg);
  if (name == "pr") return std::make_unique<PriorityController>(cfg);
  throw std::invalid_argument("unknown controller '" + name + "'");
}

}  // namespace aim::baselines
