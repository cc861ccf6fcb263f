#include "aim/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace aim::dynamics {

VehicleState step_vehicle(const VehicleState& state, double a, double dt,
                          const MotionLimits& limits) {
  VehicleState next = state;
  a = clamp(a, limits.a_min, limits.a_max);

  const double v0 = state.v;
  double ds, v1;
  if (a < 0.0 && v0 + a * dt < 0.0) {
    // Standstill inside the step: integrate up to the stop, then hold.
    const double t_stop = v0 / -a;
    ds = v0 * t_stop + 0.5 * a * t_stop * t_stop;
    v1 = 0.0;
  } else if (a > 0.0 && v0 + a * dt > limits.v_max) {
    const double t_hit = (limits.v_max - v0) / a;
    ds = v0 * t_hit + 0.5 * a * t_hit * t_hit + limits.v_max * (dt - t_hit);
    v1 = limits.v_max;
  } else {
    ds = v0 * dt + 0.5 * a * dt * dt;
    v1 = clamp(v0 + a * dt, 0.0, limits.v_max);
  }

  next.s = state.s + ds;
  next.v = v1;
  next.accel = (v1 - v0) / dt;
  return next;
}

bool rectangles_overlap(const geometry::Pose& pa, double len_a, double wid_a,
                        const geometry::Pose& pb, double len_b, double wid_b) {
  const Vec2 centers[2] = {{pa.x, pa.y}, {pb.x, pb.y}};
  const Vec2 axes[4] = {unit_from_heading(pa.heading),
                        unit_from_heading(pa.heading + kPi / 2.0),
                        unit_from_heading(pb.heading),
                        unit_from_heading(pb.heading + kPi / 2.0)};
  const double half[2][2] = {{0.5 * len_a, 0.5 * wid_a}, {0.5 * len_b, 0.5 * wid_b}};
  const Vec2 d = centers[1] - centers[0];
  for (const Vec2& axis : axes) {
    const double ra = half[0][0] * std::abs(axes[0].dot(axis)) +
                      half[0][1] * std::abs(axes[1].dot(axis));
    const double rb = half[1][0] * std::abs(axes[2].dot(axis)) +
                      half[1][1] * std::abs(axes[3].dot(axis));
    if (std::abs(d.dot(axis)) > ra + rb) return false;
  }
  return true;
}

std::vector<std::pair<int, int>> check_collisions(const std::vector<VehicleState>& states,
                                                  const geometry::IntersectionLayout& layout) {
  std::vector<std::pair<int, int>> out;
  std::vector<geometry::Pose> poses(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    poses[i] = layout.route(states[i].route).pose_at(states[i].s);

  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      const double reach = 0.5 * (states[i].length + states[j].length) +
                           0.5 * (states[i].width + states[j].width);
      const Vec2 delta{poses[j].x - poses[i].x, poses[j].y - poses[i].y};
      if (std::abs(delta.x) > reach || std::abs(delta.y) > reach) continue;
      if (rectangles_overlap(poses[i], states[i].length, states[i].width, poses[j],
                             states[j].length, states[j].width)) {
        const int a = std::min(states[i].id, states[j].id);
        const int b = std::max(states[i].id, states[j].id);
        out.emplace_back(a, b);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace aim::dynamics
