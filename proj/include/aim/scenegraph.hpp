#pragma once

#include <array>
#include <optional>
#include <vector>

#include "aim/behavior.hpp"
#include "aim/world.hpp"

namespace aim::scenegraph {

enum class EdgeType { SameLane = 0, Crossing = 1 };

struct GraphVertex {
  int vehicle_id = -1;
  std::array<double, 3> h{};  // [s, v, a~]
};

struct GraphEdge {
  int src = -1;  // vertex indices
  int dst = -1;
  EdgeType type = EdgeType::Crossing;
  std::array<double, 2> g{};  // [1/d, chi]
};

struct SceneGraph {
  std::vector<GraphVertex> vertices;
  std::vector<GraphEdge> edges;
  bool normalized = false;
  int degenerate_pairs = 0;  // coincident-position warnings
};

struct GraphParams {
  double sigma_lon = 10.0;  // Mahalanobis ellipse, heading-aligned
  double sigma_lat = 2.0;
  double inv_distance_cap = 10.0;  // clamp on the 1/d feature
};

// Relative bearing from pose j to pose i, measured in j's heading frame.
double bearing(const geometry::Pose& i, const geometry::Pose& j);

// Elliptical pair distance d_ij, anchored at the destination vehicle j.
double pair_distance(const geometry::Pose& i, const geometry::Pose& j,
                     const GraphParams& params = {});

// Builds the raw scene graph over control-zone vehicles: bidirectional
// crossing edges for pairs with an uncleared conflict ahead, one same-lane
// edge from the nearest predecessor to each follower.
SceneGraph build_graph(const World& world, const GraphParams& params = {});

// Feature scaling: s by the control-zone distance, v by v_max, a~ by the
// acceleration bound; 1/d clamped to [0, cap]; bearing left in radians.
SceneGraph normalize_features(SceneGraph graph, const World& world,
                              const GraphParams& params = {},
                              const dynamics::MotionLimits& limits = {});

}  // namespace aim::scenegraph
