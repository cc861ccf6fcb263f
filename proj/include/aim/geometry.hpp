#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aim/math.hpp"

namespace aim::geometry {

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, (-pi, pi]

  Vec2 position() const { return {x, y}; }
};

// One path piece: straight line (curvature == 0) or circular arc
// (curvature = 1/r, positive turns left).
struct Segment {
  double x0 = 0.0;
  double y0 = 0.0;
  double heading0 = 0.0;
  double length = 0.0;
  double curvature = 0.0;

  Pose pose_at(double u) const;
  Pose end_pose() const { return pose_at(length); }
};

enum class LayoutKind { S, M, L, XL };
enum class TurnType { Through, Left, Right };
enum class PriorityClass { Main, Side };

const char* to_string(LayoutKind k);
const char* to_string(TurnType t);
std::optional<LayoutKind> layout_kind_from_string(const std::string& s);

struct Route {
  int id = -1;
  std::string name;  // e.g. "W_E_through"
  std::vector<Segment> segments;
  std::vector<double> cum_length;  // prefix sums, size segments+1
  double length = 0.0;
  int approach_lane = -1;
  int exit_lane = -1;
  PriorityClass priority = PriorityClass::Main;
  TurnType turn = TurnType::Through;
  double spawn_s = 0.0;
  double control_entry_s = 0.0;
  double halt_s = 0.0;      // end of the inflow lane (box entry)
  double box_exit_s = 0.0;  // arc length where the route leaves the box
  double complete_s = 0.0;  // 20 m past the box; vehicles leave accounting here

  Pose pose_at(double s) const;
  void finalize();  // recompute cum_length / length from segments
};

enum class ConflictKind { Crossing, SameLanePrefix };

struct ConflictRelation {
  int route_a = -1;
  int route_b = -1;
  ConflictKind kind = ConflictKind::Crossing;
  double a_begin = 0.0, a_end = 0.0;  // conflict interval on route a
  double b_begin = 0.0, b_end = 0.0;
  // Arc length past which a vehicle counts as having released the conflict
  // for reservation purposes. Equals the interval end except for exit-lane
  // merges, where it is truncated at suffix start + handoff so that same-lane
  // car-following takes over.
  double a_clear_end = 0.0;
  double b_clear_end = 0.0;
};

// Shared tail of two routes that join the same exit lane.
struct ExitMerge {
  int route_a = -1;
  int route_b = -1;
  double a_suffix_start = 0.0;
  double b_suffix_start = 0.0;
};

struct Lane {
  int id = -1;
  std::string name;
  bool approach = false;
  int signal_group = -1;             // -1: not signal controlled (exit lanes)
  double demand_factor = 1.0;        // 1.0 main through lanes, 0.5 side/left
  std::vector<int> routes;           // routes served (approach lanes only)
  std::vector<double> route_weights; // maneuver mix for spawning
};

struct GeometryParams {
  double lane_width = 4.0;
  double vehicle_length = 5.0;
  double vehicle_width = 2.0;
  double approach_length = 75.0;  // spawn point to box entry
  double exit_length = 40.0;      // box exit to route end
  double control_distance = 50.0; // control zone entry, upstream of the box
  double completion_past_box = 20.0;
  double merge_handoff = 7.0;     // clearance truncation past a merge point
};

struct IntersectionLayout {
  LayoutKind kind = LayoutKind::M;
  GeometryParams params;
  double box_half_x = 0.0;  // side road half width
  double box_half_y = 0.0;  // main road half width
  std::vector<Lane> lanes;
  std::vector<Route> routes;
  std::vector<ConflictRelation> conflicts;  // canonical order route_a < route_b
  std::vector<ExitMerge> merges;

  const Route& route(int id) const { return routes[static_cast<std::size_t>(id)]; }
  const Lane& lane(int id) const { return lanes[static_cast<std::size_t>(id)]; }

  // Oriented view: relation with `a` mapped to first slot, if any.
  std::optional<ConflictRelation> conflict(int a, int b) const;
  const ExitMerge* merge(int a, int b) const;  // oriented like conflict()
  // Shared-prefix length for routes on the same approach lane (0 if none).
  double shared_prefix(int a, int b) const;

  void rebuild_index();

 private:
  std::vector<std::vector<int>> conflict_index_;  // per route: indices into conflicts
  std::vector<std::vector<int>> merge_index_;

 public:
  const std::vector<int>& conflicts_of(int route) const {
    return conflict_index_[static_cast<std::size_t>(route)];
  }
};

// Constructs one of the four canonical layouts, conflicts included.
IntersectionLayout build_layout(LayoutKind kind, const GeometryParams& params = {});

// Exact pose on a route; throws std::out_of_range if s is outside [0, length].
Pose pose_at(const Route& route, double s);

// Minimum distance from a point to the route centerline (exact per segment).
double distance_to_route(const Vec2& p, const Route& route);

// Swept-area conflict test between two routes of one layout. Returns the
// crossing relation with tight intervals, a same-lane-prefix relation when the
// approach lane is shared, or nullopt.
std::optional<ConflictRelation> conflict_between(const Route& a, const Route& b,
                                                 double half_width);

// Length of the common leading geometry of two routes (0 if they differ
// immediately).
double shared_prefix_length(const Route& a, const Route& b);
// Length of the common trailing geometry (exit-lane merges).
double shared_suffix_length(const Route& a, const Route& b);

}  // namespace aim::geometry
