#pragma once

#include <utility>
#include <vector>

#include "aim/geometry.hpp"

namespace aim::dynamics {

struct MotionLimits {
  double a_min = -5.0;  // m/s^2
  double a_max = 3.0;
  double v_max = 10.0;  // m/s
};

struct VehicleState {
  int id = -1;
  int route = -1;
  double s = 0.0;       // arc length along the route, body center
  double v = 0.0;       // m/s, never negative
  double accel = 0.0;   // realized acceleration of the last step
  double spawn_time = 0.0;
  double length = 5.0;
  double width = 2.0;

  double front_s() const { return s + 0.5 * length; }
  double rear_s() const { return s - 0.5 * length; }
};

// Advances one vehicle by dt under commanded acceleration a. Exact
// constant-acceleration kinematics with standstill and v_max saturation
// handled inside the step (no reversing, no overshoot). The stored accel is
// the realized mean (v'-v)/dt.
VehicleState step_vehicle(const VehicleState& state, double a, double dt,
                          const MotionLimits& limits = {});

// Oriented-rectangle overlap (separating axis test).
bool rectangles_overlap(const geometry::Pose& pa, double len_a, double wid_a,
                        const geometry::Pose& pb, double len_b, double wid_b);

// All overlapping pairs, reported as (id_i, id_j) with id_i < id_j.
std::vector<std::pair<int, int>> check_collisions(const std::vector<VehicleState>& states,
                                                  const geometry::IntersectionLayout& layout);

}  // namespace aim::dynamics
