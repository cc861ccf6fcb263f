#include "aim/scenegraph.hpp"

#include <cmath>

namespace aim::scenegraph {

double bearing(const geometry::Pose& i, const geometry::Pose& j) {
  const double dx = i.x - j.x;
  const double dy = i.y - j.y;
  if (dx == 0.0 && dy == 0.0) return 0.0;
  return wrap_angle(std::atan2(dy, dx) - j.heading);
}

double pair_distance(const geometry::Pose& i, const geometry::Pose& j,
                     const GraphParams& params) {
  const Vec2 delta{i.x - j.x, i.y - j.y};
  const Vec2 fwd = unit_from_heading(j.heading);
  const Vec2 left{-fwd.y, fwd.x};
  const double lon = delta.dot(fwd) / params.sigma_lon;
  const double lat = delta.dot(left) / params.sigma_lat;
  return std::sqrt(lon * lon + lat * lat);
}

namespace {

bool conflict_cleared(const Vehicle& v, double clear_end) {
  return v.st.rear_s() > clear_end;
}

}  // namespace

SceneGraph build_graph(const World& world, const GraphParams& params) {
  SceneGraph graph;
  std::vector<std::size_t> world_index;  // vertex -> world vehicle index
  std::vector<int> vertex_of(world.vehicles.size(), -1);
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    const Vehicle& v = world.vehicles[i];
    if (!world.in_control_zone(v)) continue;
    vertex_of[i] = static_cast<int>(graph.vertices.size());
    world_index.push_back(i);
    graph.vertices.push_back({v.st.id, {v.st.s, v.st.v, v.st.accel}});
  }

  std::vector<geometry::Pose> poses(graph.vertices.size());
  for (std::size_t k = 0; k < world_index.size(); ++k) {
    const Vehicle& v = world.vehicles[world_index[k]];
    poses[k] = world.route_of(v).pose_at(std::min(v.st.s, world.route_of(v).length));
  }

  auto edge_features = [&](int src, int dst) {
    const geometry::Pose& pi = poses[static_cast<std::size_t>(src)];
    const geometry::Pose& pj = poses[static_cast<std::size_t>(dst)];
    if (pi.x == pj.x && pi.y == pj.y) {
      ++graph.degenerate_pairs;
      return std::array<double, 2>{params.inv_distance_cap, 0.0};
    }
    return std::array<double, 2>{1.0 / pair_distance(pi, pj, params), bearing(pi, pj)};
  };

  const geometry::IntersectionLayout& layout = *world.layout;
  for (std::size_t ka = 0; ka < world_index.size(); ++ka) {
    const std::size_t ia = world_index[ka];
    const Vehicle& va = world.vehicles[ia];

    // Same-lane edge from the nearest predecessor.
    double best_gap = kInf;
    int best_vertex = -1;
    for (std::size_t kb = 0; kb < world_index.size(); ++kb) {
      if (ka == kb) continue;
      const auto gap = behavior::path_gap(world, ia, world_index[kb]);
      if (gap && *gap < best_gap) {
        best_gap = *gap;
        best_vertex = static_cast<int>(kb);
      }
    }
    if (best_vertex >= 0) {
      GraphEdge e;
      e.src = best_vertex;  // predecessor -> follower
      e.dst = static_cast<int>(ka);
      e.type = EdgeType::SameLane;
      e.g = edge_features(e.src, e.dst);
      graph.edges.push_back(e);
    }

    // Bidirectional crossing edges while the conflict is ahead of both.
    for (std::size_t kb = ka + 1; kb < world_index.size(); ++kb) {
      const std::size_t ib = world_index[kb];
      const Vehicle& vb = world.vehicles[ib];
      if (behavior::path_gap(world, ia, ib) || behavior::path_gap(world, ib, ia)) continue;
      const auto rel = layout.conflict(va.st.route, vb.st.route);
      if (!rel || rel->kind != geometry::ConflictKind::Crossing) continue;
      if (conflict_cleared(va, rel->a_clear_end) || conflict_cleared(vb, rel->b_clear_end))
        continue;
      GraphEdge ab;
      ab.src = static_cast<int>(ka);
      ab.dst = static_cast<int>(kb);
      ab.type = EdgeType::Crossing;
      ab.g = edge_features(ab.src, ab.dst);
      graph.edges.push_back(ab);
      GraphEdge ba;
      ba.src = static_cast<int>(kb);
      ba.dst = static_cast<int>(ka);
      ba.type = EdgeType::Crossing;
      ba.g = edge_features(ba.src, ba.dst);
      graph.edges.push_back(ba);
    }
  }
  return graph;
}

SceneGraph normalize_features(SceneGraph graph, const World& world, const GraphParams& params,
                              const dynamics::MotionLimits& limits) {
  const double accel_scale = std::max(std::abs(limits.a_min), limits.a_max);
  for (GraphVertex& v : graph.vertices) {
    const Vehicle* veh = nullptr;
    for (const Vehicle& w : world.vehicles)
      if (w.st.id == v.vehicle_id) {
        veh = &w;
        break;
      }
    const geometry::Route& route = world.layout->route(veh->st.route);
    v.h[0] = (v.h[0] - route.control_entry_s) / world.layout->params.control_distance;
    v.h[1] /= limits.v_max;
    v.h[2] /= accel_scale;
  }
  for (GraphEdge& e : graph.edges) e.g[0] = clamp(e.g[0], 0.0, params.inv_distance_cap);
  graph.normalized = true;
  return graph;
}

}  // namespace aim::scenegraph
