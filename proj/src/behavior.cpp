#include "aim/behavior.hpp"

#include <algorithm>
#include <cmath>

namespace aim::behavior {

double idm_accel(double ego_v, const LeaderView& view, const CfParams& p,
                 const dynamics::MotionLimits& limits) {
  if (view.gap <= 0.0) return limits.a_min;
  const double free_term = std::pow(ego_v / p.v0, p.delta);
  double interaction = 0.0;
  if (std::isfinite(view.gap)) {
    const double dv = ego_v - view.leader_speed;
    const double dynamic =
        std::max(0.0, ego_v * p.T + ego_v * dv / (2.0 * std::sqrt(p.a * p.b)));
    const double s_star = p.s0 + dynamic;
    interaction = (s_star / view.gap) * (s_star / view.gap);
  }
  return clamp(p.a * (1.0 - free_term - interaction), limits.a_min, limits.a_max);
}

double eidm_accel(double ego_v, const LeaderView& view, const CfParams& p,
                  const dynamics::MotionLimits& limits, CfMemory& mem, double now) {
  const double idm = idm_accel(ego_v, view, p, limits);
  const bool standing = ego_v < 0.05;

  if (standing) {
    if (mem.stopped_since < 0.0) mem.stopped_since = now;
    if (view.gap > p.s0 + 0.5) {
      // Leader departed: react after the drive-off delay.
      if (mem.driveoff_start < 0.0) mem.driveoff_start = now;
      if (now - mem.driveoff_start < p.driveoff_delay) return 0.0;
      mem.in_driveoff = true;
    } else {
      mem.driveoff_start = -1.0;
      mem.in_driveoff = false;
    }
  } else {
    mem.stopped_since = -1.0;
  }

  if (mem.in_driveoff) {
    // Launch with the headway term fading in over speed, so the adapted
    // minimum gap hands over to the plain IDM without an acceleration jump.
    const double ramp_speed = 0.6 * p.v0;
    if (ego_v >= ramp_speed || view.gap < p.s0) {
      mem.in_driveoff = false;
      mem.driveoff_start = -1.0;
      return idm;
    }
    double launch;
    if (std::isfinite(view.gap)) {
      const double dv = ego_v - view.leader_speed;
      const double ramp = clamp(ego_v / ramp_speed, 0.0, 1.0);
      const double dynamic = std::max(
          0.0, ego_v * p.T * ramp + ego_v * dv / (2.0 * std::sqrt(p.a * p.b)));
      const double s_star = p.s0 + dynamic;
      launch = p.a * (1.0 - std::pow(ego_v / p.v0, p.delta) -
                      (s_star / view.gap) * (s_star / view.gap));
    } else {
      launch = p.a * (1.0 - std::pow(ego_v / p.v0, p.delta));
    }
    launch = clamp(launch, limits.a_min, limits.a_max);
    return std::max(idm, launch);
  }
  return idm;
}

double cf_accel(double ego_v, const LeaderView& view, const CfParams& p,
                const dynamics::MotionLimits& limits, CfMemory& mem, double now) {
  if (view.gap <= 0.0 && ego_v > 0.05) ++mem.emergency_count;
  if (p.variant == CfVariant::IDM) return idm_accel(ego_v, view, p, limits);
  return eidm_accel(ego_v, view, p, limits, mem, now);
}

std::optional<double> path_gap(const World& world, std::size_t ego_index,
                               std::size_t other_index) {
  const Vehicle& ego = world.vehicles[ego_index];
  const Vehicle& other = world.vehicles[other_index];
  const geometry::IntersectionLayout& layout = *world.layout;

  if (other.st.route == ego.st.route) {
    if (other.st.s > ego.st.s) return other.st.s - ego.st.s;
    return std::nullopt;
  }
  const double prefix = layout.shared_prefix(ego.st.route, other.st.route);
  if (prefix > 0.0 && ego.st.s <= prefix && other.st.s > ego.st.s) {
    // Shared approach: arc lengths are directly comparable (the leader may
    // already be past the divergence point).
    return other.st.s - ego.st.s;
  }
  const geometry::ExitMerge* merge = layout.merge(ego.st.route, other.st.route);
  if (merge != nullptr) {
    const double ego_suffix =
        merge->route_a == ego.st.route ? merge->a_suffix_start : merge->b_suffix_start;
    const double other_suffix =
        merge->route_a == other.st.route ? merge->a_suffix_start : merge->b_suffix_start;
    if (other.st.s >= other_suffix) {
      if (ego.st.s >= ego_suffix) {
        const double d_ego = world.route_of(ego).length - ego.st.s;
        const double d_other = world.route_of(other).length - other.st.s;
        if (d_other < d_ego) return d_ego - d_other;
      } else {
        // Ego still upstream of the merge point; leader already merged.
        return (ego_suffix - ego.st.s) + (other.st.s - other_suffix);
      }
    }
  }
  return std::nullopt;
}

LeaderView find_leader(const World& world, std::size_t ego_index) {
  const Vehicle& ego = world.vehicles[ego_index];
  double best_gap_s = kInf;
  double best_speed = 0.0;
  double best_len = 0.0;
  for (std::size_t j = 0; j < world.vehicles.size(); ++j) {
    if (j == ego_index) continue;
    const auto gap_s = path_gap(world, ego_index, j);
    if (gap_s && *gap_s < best_gap_s) {
      best_gap_s = *gap_s;
      best_speed = world.vehicles[j].st.v;
      best_len = world.vehicles[j].st.length;
    }
  }
  if (!std::isfinite(best_gap_s)) return {};
  const double gap = best_gap_s - 0.5 * (best_len + ego.st.length);
  return {gap, best_speed, LeaderSource::Real};
}

LeaderView resolve_leader(const World& world, std::size_t ego_index, bool right_of_way) {
  LeaderView base = find_leader(world, ego_index);
  if (right_of_way) return base;
  const Vehicle& ego = world.vehicles[ego_index];
  const double dist_to_halt = world.route_of(ego).halt_s - ego.st.front_s();
  if (dist_to_halt >= 0.0 &&
      (base.source == LeaderSource::None || base.gap > dist_to_halt)) {
    return {dist_to_halt, 0.0, LeaderSource::VirtualHalt};
  }
  return base;
}

LeaderView with_virtual_stop(const World& world, std::size_t ego_index, double stop_s,
                             LeaderView base, LeaderSource source) {
  const Vehicle& ego = world.vehicles[ego_index];
  const double dist = stop_s - ego.st.front_s();
  if (base.source == LeaderSource::None || dist < base.gap) return {dist, 0.0, source};
  return base;
}

}  // namespace aim::behavior
