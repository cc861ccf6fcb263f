#pragma once

#include <vector>

#include "aim/dynamics.hpp"
#include "aim/geometry.hpp"

namespace aim {

// Per-vehicle car-following memory (EIDM drive-off bookkeeping, diagnostics).
struct CfMemory {
  double stopped_since = -1.0;
  double driveoff_start = -1.0;
  bool in_driveoff = false;
  int emergency_count = 0;
};

struct Vehicle {
  dynamics::VehicleState st;
  double arrival_stamp = -1.0;  // control-zone entry time; -1 before entry
  int arrival_seq = -1;         // tie-break for identical stamps
  bool committed = false;       // passed the halt point with right of way
  bool stopped = false;         // dipped below the stop threshold at least once
  CfMemory cf;
};

struct World {
  const geometry::IntersectionLayout* layout = nullptr;
  double time = 0.0;
  std::vector<Vehicle> vehicles;

  const geometry::Route& route_of(const Vehicle& v) const {
    return layout->route(v.st.route);
  }
  bool in_control_zone(const Vehicle& v) const {
    return v.st.s >= route_of(v).control_entry_s;
  }
};

}  // namespace aim
