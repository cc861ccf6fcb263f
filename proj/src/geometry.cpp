#include "aim/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace aim::geometry {

namespace {

Vec2 left_normal(double heading) { return {-std::sin(heading), std::cos(heading)}; }

}  // namespace

Pose Segment::pose_at(double u) const {
  if (curvature == 0.0) {
    const Vec2 d = unit_from_heading(heading0);
    return {x0 + d.x * u, y0 + d.y * u, heading0};
  }
  const double rc = 1.0 / curvature;  // signed radius
  const Vec2 c = Vec2{x0, y0} + left_normal(heading0) * rc;
  const double h = heading0 + curvature * u;
  const Vec2 p = c - left_normal(h) * rc;
  return {p.x, p.y, wrap_angle(h)};
}

const char* to_string(LayoutKind k) {
  switch (k) {
    case LayoutKind::S: return "S";
    case LayoutKind::M: return "M";
    case LayoutKind::L: return "L";
    case LayoutKind::XL: return "XL";
  }
  return "?";
}

const char* to_string(TurnType t) {
  switch (t) {
    case TurnType::Through: return "through";
    case TurnType::Left: return "left";
    case TurnType::Right: return "right";
  }
  return "?";
}

std::optional<LayoutKind> layout_kind_from_string(const std::string& s) {
  if (s == "S" || s == "s") return LayoutKind::S;
  if (s == "M" || s == "m") return LayoutKind::M;
  if (s == "L" || s == "l") return LayoutKind::L;
  if (s == "XL" || s == "xl") return LayoutKind::XL;
  return std::nullopt;
}

void Route::finalize() {
  cum_length.assign(1, 0.0);
  for (const Segment& seg : segments) cum_length.push_back(cum_length.back() + seg.length);
  length = cum_length.back();
}

Pose Route::pose_at(double s) const { return geometry::pose_at(*this, s); }

Pose pose_at(const Route& route, double s) {
  if (s < -1e-9 || s > route.length + 1e-9)
    throw std::out_of_range("pose_at: arc length outside route");
  s = clamp(s, 0.0, route.length);
  // Find the segment containing s.
  auto it = std::upper_bound(route.cum_length.begin(), route.cum_length.end(), s);
  std::size_t idx = static_cast<std::size_t>(std::distance(route.cum_length.begin(), it));
  idx = idx == 0 ? 0 : idx - 1;
  if (idx >= route.segments.size()) idx = route.segments.size() - 1;
  return route.segments[idx].pose_at(s - route.cum_length[idx]);
}

namespace {

double distance_to_segment(const Vec2& p, const Segment& seg) {
  if (seg.curvature == 0.0) {
    const Vec2 a{seg.x0, seg.y0};
    const Vec2 d = unit_from_heading(seg.heading0);
    const double t = clamp((p - a).dot(d), 0.0, seg.length);
    return (p - (a + d * t)).norm();
  }
  const double rc = 1.0 / seg.curvature;
  const double r = std::abs(rc);
  const Vec2 c = Vec2{seg.x0, seg.y0} + left_normal(seg.heading0) * rc;
  // Angle of a route point around the center advances linearly in arc length.
  const Vec2 rel0 = Vec2{seg.x0, seg.y0} - c;
  const double phi0 = std::atan2(rel0.y, rel0.x);
  const double phi_p = std::atan2(p.y - c.y, p.x - c.x);
  const double u = wrap_angle(phi_p - phi0) / seg.curvature;
  if (u >= 0.0 && u <= seg.length) return std::abs((p - c).norm() - r);
  const Pose e = seg.end_pose();
  const double d0 = (p - Vec2{seg.x0, seg.y0}).norm();
  const double d1 = (p - Vec2{e.x, e.y}).norm();
  return std::min(d0, d1);
}

}  // namespace

double distance_to_route(const Vec2& p, const Route& route) {
  double best = kInf;
  for (const Segment& seg : route.segments) best = std::min(best, distance_to_segment(p, seg));
  return best;
}

double shared_prefix_length(const Route& a, const Route& b) {
  const double limit = std::min(a.length, b.length);
  const double tol = 1e-4;
  auto same_at = [&](double u) {
    const Pose pa = pose_at(a, u);
    const Pose pb = pose_at(b, u);
    return (Vec2{pa.x, pa.y} - Vec2{pb.x, pb.y}).norm() < tol;
  };
  if (!same_at(0.0)) return 0.0;
  const double step = 0.125;
  double lo = 0.0, hi = limit;
  bool diverged = false;
  for (double u = step; u < limit; u += step) {
    if (!same_at(u)) {
      lo = u - step;
      hi = u;
      diverged = true;
      break;
    }
  }
  if (!diverged) return same_at(limit) ? limit : limit - step;
  for (int i = 0; i < 40 && hi - lo > 1e-9; ++i) {
    const double mid = 0.5 * (lo + hi);
    (same_at(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double shared_suffix_length(const Route& a, const Route& b) {
  const double limit = std::min(a.length, b.length);
  const double tol = 1e-4;
  auto same_at = [&](double u) {
    const Pose pa = pose_at(a, a.length - u);
    const Pose pb = pose_at(b, b.length - u);
    return (Vec2{pa.x, pa.y} - Vec2{pb.x, pb.y}).norm() < tol;
  };
  if (!same_at(0.0)) return 0.0;
  const double step = 0.125;
  double lo = 0.0, hi = limit;
  bool diverged = false;
  for (double u = step; u < limit; u += step) {
    if (!same_at(u)) {
      lo = u - step;
      hi = u;
      diverged = true;
      break;
    }
  }
  if (!diverged) return limit - step;
  for (int i = 0; i < 40 && hi - lo > 1e-9; ++i) {
    const double mid = 0.5 * (lo + hi);
    (same_at(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

// Boundary of {s : dist(a(s), b) <= threshold} isolated by scan + bisection on
// the exact distance function.
std::optional<std::pair<double, double>> conflict_interval_on(const Route& a, const Route& b,
                                                              double threshold) {
  auto inside = [&](double s) {
    const Pose p = pose_at(a, s);
    return distance_to_route({p.x, p.y}, b) <= threshold;
  };
  const double step = 0.1;
  std::vector<double> samples;
  for (double s = 0.0; s < a.length; s += step) samples.push_back(s);
  samples.push_back(a.length);

  int first = -1, last = -1;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (inside(samples[i])) {
      if (first < 0) first = static_cast<int>(i);
      last = static_cast<int>(i);
    }
  }
  if (first < 0) return std::nullopt;

  auto bisect = [&](double out_s, double in_s) {
    for (int i = 0; i < 50 && std::abs(in_s - out_s) > 1e-9; ++i) {
      const double mid = 0.5 * (out_s + in_s);
      (inside(mid) ? in_s : out_s) = mid;
    }
    return 0.5 * (out_s + in_s);
  };

  double begin = samples[static_cast<std::size_t>(first)];
  if (first > 0) begin = bisect(samples[static_cast<std::size_t>(first - 1)], begin);
  double end = samples[static_cast<std::size_t>(last)];
  if (last + 1 < static_cast<int>(samples.size()))
    end = bisect(samples[static_cast<std::size_t>(last + 1)], end);
  return std::make_pair(begin, end);
}

}  // namespace

std::optional<ConflictRelation> conflict_between(const Route& a, const Route& b,
                                                 double half_width) {
  if (a.id == b.id) return std::nullopt;
  if (a.approach_lane >= 0 && a.approach_lane == b.approach_lane) {
    const double prefix = shared_prefix_length(a, b);
    ConflictRelation rel;
    rel.route_a = a.id;
    rel.route_b = b.id;
    rel.kind = ConflictKind::SameLanePrefix;
    rel.a_begin = rel.b_begin = 0.0;
    rel.a_end = rel.b_end = prefix;
    rel.a_clear_end = rel.b_clear_end = prefix;
    return rel;
  }
  const double threshold = 2.0 * half_width;
  const auto ia = conflict_interval_on(a, b, threshold);
  if (!ia) return std::nullopt;
  const auto ib = conflict_interval_on(b, a, threshold);
  if (!ib) return std::nullopt;
  ConflictRelation rel;
  rel.route_a = a.id;
  rel.route_b = b.id;
  rel.kind = ConflictKind::Crossing;
  rel.a_begin = ia->first;
  rel.a_end = ia->second;
  rel.b_begin = ib->first;
  rel.b_end = ib->second;
  rel.a_clear_end = rel.a_end;
  rel.b_clear_end = rel.b_end;
  return rel;
}

std::optional<ConflictRelation> IntersectionLayout::conflict(int a, int b) const {
  for (int idx : conflict_index_[static_cast<std::size_t>(a)]) {
    const ConflictRelation& rel = conflicts[static_cast<std::size_t>(idx)];
    if (rel.route_a == a && rel.route_b == b) return rel;
    if (rel.route_a == b && rel.route_b == a) {
      ConflictRelation sw = rel;
      std::swap(sw.route_a, sw.route_b);
      std::swap(sw.a_begin, sw.b_begin);
      std::swap(sw.a_end, sw.b_end);
      std::swap(sw.a_clear_end, sw.b_clear_end);
      return sw;
    }
  }
  return std::nullopt;
}

const ExitMerge* IntersectionLayout::merge(int a, int b) const {
  for (int idx : merge_index_[static_cast<std::size_t>(a)]) {
    const ExitMerge& m = merges[static_cast<std::size_t>(idx)];
    if ((m.route_a == a && m.route_b == b) || (m.route_a == b && m.route_b == a)) return &m;
  }
  return nullptr;
}

double IntersectionLayout::shared_prefix(int a, int b) const {
  const auto rel = conflict(a, b);
  if (rel && rel->kind == ConflictKind::SameLanePrefix) return rel->a_end;
  return 0.0;
}

void IntersectionLayout::rebuild_index() {
  conflict_index_.assign(routes.size(), {});
  merge_index_.assign(routes.size(), {});
  for (std::size_t i = 0; i < conflicts.size(); ++i) {
    conflict_index_[static_cast<std::size_t>(conflicts[i].route_a)].push_back(static_cast<int>(i));
    conflict_index_[static_cast<std::size_t>(conflicts[i].route_b)].push_back(static_cast<int>(i));
  }
  for (std::size_t i = 0; i < merges.size(); ++i) {
    merge_index_[static_cast<std::size_t>(merges[i].route_a)].push_back(static_cast<int>(i));
    merge_index_[static_cast<std::size_t>(merges[i].route_b)].push_back(static_cast<int>(i));
  }
}

namespace {

enum class Arm { W, E, N, S };

const char* arm_name(Arm a) {
  switch (a) {
    case Arm::W: return "W";
    case Arm::E: return "E";
    case Arm::N: return "N";
    case Arm::S: return "S";
  }
  return "?";
}

Vec2 approach_dir(Arm a) {
  switch (a) {
    case Arm::W: return {1.0, 0.0};
    case Arm::E: return {-1.0, 0.0};
    case Arm::N: return {0.0, -1.0};
    case Arm::S: return {0.0, 1.0};
  }
  return {};
}

bool is_main(Arm a) { return a == Arm::W || a == Arm::E; }

Arm turn_target(Arm from, TurnType t) {
  static const std::map<std::pair<Arm, TurnType>, Arm> table = {
      {{Arm::W, TurnType::Through}, Arm::E}, {{Arm::E, TurnType::Through}, Arm::W},
      {{Arm::N, TurnType::Through}, Arm::S}, {{Arm::S, TurnType::Through}, Arm::N},
      {{Arm::W, TurnType::Right}, Arm::S},   {{Arm::S, TurnType::Right}, Arm::E},
      {{Arm::E, TurnType::Right}, Arm::N},   {{Arm::N, TurnType::Right}, Arm::W},
      {{Arm::W, TurnType::Left}, Arm::N},    {{Arm::N, TurnType::Left}, Arm::E},
      {{Arm::E, TurnType::Left}, Arm::S},    {{Arm::S, TurnType::Left}, Arm::W},
  };
  return table.at({from, t});
}

double heading_of(const Vec2& d) { return std::atan2(d.y, d.x); }

}  // namespace

IntersectionLayout build_layout(LayoutKind kind, const GeometryParams& params) {
  IntersectionLayout layout;
  layout.kind = kind;
  layout.params = params;

  const bool main_wide = kind == LayoutKind::L || kind == LayoutKind::XL;
  const bool side_wide = kind == LayoutKind::XL;
  layout.box_half_y = main_wide ? 2.0 * params.lane_width : params.lane_width;
  layout.box_half_x = side_wide ? 2.0 * params.lane_width : params.lane_width;

  std::vector<Arm> arms = {Arm::W, Arm::E, Arm::N, Arm::S};
  if (kind == LayoutKind::S) arms = {Arm::W, Arm::E, Arm::S};

  auto arm_present = [&](Arm a) { return std::find(arms.begin(), arms.end(), a) != arms.end(); };
  auto arm_dual = [&](Arm a) { return is_main(a) ? main_wide : side_wide; };
  auto edge_dist = [&](Arm a) { return is_main(a) ? layout.box_half_x : layout.box_half_y; };

  const double half_lane = 0.5 * params.lane_width;

  // Approach lanes. Offsets are measured to the right of the travel direction.
  std::map<std::pair<Arm, bool>, int> approach_lane_id;  // (arm, is_left_lane)
  for (Arm a : arms) {
    const bool dual = arm_dual(a);
    for (int li = 0; li < (dual ? 2 : 1); ++li) {
      const bool left_lane = dual && li == 1;
      Lane lane;
      lane.id = static_cast<int>(layout.lanes.size());
      lane.name = std::string(arm_name(a)) + (left_lane ? "_in_left" : "_in");
      lane.approach = true;
      lane.demand_factor = (is_main(a) && !left_lane) ? 1.0 : 0.5;
      approach_lane_id[{a, left_lane}] = lane.id;
      layout.lanes.push_back(lane);
    }
  }
  // Exit lanes (one per arm).
  std::map<Arm, int> exit_lane_id;
  for (Arm a : arms) {
    Lane lane;
    lane.id = static_cast<int>(layout.lanes.size());
    lane.name = std::string(arm_name(a)) + "_out";
    lane.approach = false;
    exit_lane_id[a] = lane.id;
    layout.lanes.push_back(lane);
  }

  // Signal groups: 0 main outer, then main left (L/XL), side outer, side left (XL).
  {
    int group_main_left = -1, group_side = -1, group_side_left = -1;
    if (kind == LayoutKind::S || kind == LayoutKind::M) {
      group_side = 1;
    } else if (kind == LayoutKind::L) {
      group_main_left = 1;
      group_side = 2;
    } else {
      group_main_left = 1;
      group_side = 2;
      group_side_left = 3;
    }
    for (auto& [key, id] : approach_lane_id) {
      Lane& lane = layout.lanes[static_cast<std::size_t>(id)];
      const auto [arm, left_lane] = key;
      if (is_main(arm))
        lane.signal_group = left_lane ? group_main_left : 0;
      else
        lane.signal_group = left_lane ? group_side_left : group_side;
    }
  }

  auto lane_anchor = [&](Arm a, double right_offset, bool outbound) {
    const Vec2 u = approach_dir(a);
    const Vec2 travel = outbound ? Vec2{-u.x, -u.y} : u;
    const Vec2 r{travel.y, -travel.x};
    // Box-edge point of the lane centerline on this arm.
    const Vec2 base = Vec2{-u.x, -u.y} * edge_dist(a);
    return std::make_pair(base + r * right_offset, travel);
  };

  // Routes.
  for (Arm from : arms) {
    for (TurnType turn : {TurnType::Through, TurnType::Left, TurnType::Right}) {
      const Arm to = turn_target(from, turn);
      if (!arm_present(to)) continue;
      const bool from_dual = arm_dual(from);
      const bool use_left_lane = from_dual && turn == TurnType::Left;
      const double in_off = (from_dual && !use_left_lane) ? 1.5 * params.lane_width : half_lane;
      const double out_off = arm_dual(to) ? 1.5 * params.lane_width : half_lane;

      const auto [A, u] = lane_anchor(from, in_off, false);
      const auto [B, w] = lane_anchor(to, out_off, true);

      Route route;
      route.id = static_cast<int>(layout.routes.size());
      route.name = std::string(arm_name(from)) + "_" + arm_name(to) + "_" + to_string(turn);
      route.approach_lane = approach_lane_id.at({from, use_left_lane});
      route.exit_lane = exit_lane_id.at(to);
      route.priority = is_main(from) ? PriorityClass::Main : PriorityClass::Side;
      route.turn = turn;

      const Vec2 spawn = A - u * params.approach_length;
      route.segments.push_back({spawn.x, spawn.y, heading_of(u), params.approach_length, 0.0});

      if (turn == TurnType::Through) {
        const double span = (B - A).dot(u);
        assert(span > 0.0 && std::abs((B - A).cross(u)) < 1e-9);
        route.segments.push_back({A.x, A.y, heading_of(u), span, 0.0});
      } else {
        const double f = (B - A).dot(u);
        const double m = (B - A).dot(w);
        assert(f > 1e-9 && m > 1e-9);
        const double radius = std::min(f, m);
        const double pre = f - radius, post = m - radius;
        Vec2 cursor = A;
        if (pre > 1e-9) {
          route.segments.push_back({cursor.x, cursor.y, heading_of(u), pre, 0.0});
          cursor = cursor + u * pre;
        }
        const double sign = u.cross(w) > 0.0 ? 1.0 : -1.0;
        route.segments.push_back(
            {cursor.x, cursor.y, heading_of(u), radius * kPi / 2.0, sign / radius});
        if (post > 1e-9) {
          const Vec2 arc_end = B - w * post;
          route.segments.push_back({arc_end.x, arc_end.y, heading_of(w), post, 0.0});
        }
      }
      route.segments.push_back({B.x, B.y, heading_of(w), params.exit_length, 0.0});

      route.finalize();
      route.spawn_s = 0.0;
      route.control_entry_s = params.approach_length - params.control_distance;
      route.halt_s = params.approach_length;
      route.box_exit_s = route.length - params.exit_length;
      route.complete_s = route.box_exit_s + params.completion_past_box;
      layout.routes.push_back(std::move(route));
    }
  }

  // Maneuver mix per approach lane.
  for (Route& r : layout.routes)
    layout.lanes[static_cast<std::size_t>(r.approach_lane)].routes.push_back(r.id);
  for (Lane& lane : layout.lanes) {
    if (!lane.approach || lane.routes.empty()) continue;
    std::set<TurnType> turns;
    for (int rid : lane.routes) turns.insert(layout.routes[static_cast<std::size_t>(rid)].turn);
    auto weight_of = [&](TurnType t) {
      if (turns.size() == 1) return 1.0;
      if (turns.size() == 3) return t == TurnType::Through ? 0.6 : 0.2;
      if (turns.count(TurnType::Through)) return t == TurnType::Through ? 0.75 : 0.25;
      return 0.5;  // left+right stub arm
    };
    for (int rid : lane.routes)
      lane.route_weights.push_back(weight_of(layout.routes[static_cast<std::size_t>(rid)].turn));
  }

  // Conflict table and exit merges.
  const double half_width = 0.5 * params.vehicle_width;
  for (std::size_t i = 0; i < layout.routes.size(); ++i) {
    for (std::size_t j = i + 1; j < layout.routes.size(); ++j) {
      auto rel = conflict_between(layout.routes[i], layout.routes[j], half_width);
      if (rel) layout.conflicts.push_back(*rel);
    }
  }
  for (std::size_t i = 0; i < layout.routes.size(); ++i) {
    for (std::size_t j = i + 1; j < layout.routes.size(); ++j) {
      Route& a = layout.routes[i];
      Route& b = layout.routes[j];
      if (a.exit_lane != b.exit_lane) continue;
      const double suffix = shared_suffix_length(a, b);
      if (suffix <= 0.0) continue;
      layout.merges.push_back({a.id, b.id, a.length - suffix, b.length - suffix});
      for (ConflictRelation& rel : layout.conflicts) {
        if (rel.route_a != a.id || rel.route_b != b.id || rel.kind != ConflictKind::Crossing)
          continue;
        rel.a_clear_end = std::min(rel.a_end, a.length - suffix + params.merge_handoff);
        rel.b_clear_end = std::min(rel.b_end, b.length - suffix + params.merge_handoff);
      }
    }
  }
  layout.rebuild_index();
  return layout;
}

}  // namespace aim::geometry
