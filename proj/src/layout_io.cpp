#include "aim/layout_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace aim::geometry {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json segment_to_json(const Segment& s) {
  return json{{"x", s.x0}, {"y", s.y0}, {"heading", s.heading0},
              {"length", s.length}, {"curvature", s.curvature}};
}

Segment segment_from_json(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("heading").get<double>(),
          j.at("length").get<double>(), j.at("curvature").get<double>()};
}

const char* kind_str(ConflictKind k) {
  return k == ConflictKind::Crossing ? "crossing" : "same_lane_prefix";
}

ConflictKind kind_from(const std::string& s) {
  if (s == "crossing") return ConflictKind::Crossing;
  if (s == "same_lane_prefix") return ConflictKind::SameLanePrefix;
  throw std::runtime_error("layout: unknown conflict kind '" + s + "'");
}

}  // namespace

std::string layout_to_json(const IntersectionLayout& l) {
  json j;
  j["format"] = "aim-layout";
  j["version"] = kFormatVersion;
  j["kind"] = to_string(l.kind);
  j["box_half_x"] = l.box_half_x;
  j["box_half_y"] = l.box_half_y;
  j["params"] = {{"lane_width", l.params.lane_width},
                 {"vehicle_length", l.params.vehicle_length},
                 {"vehicle_width", l.params.vehicle_width},
                 {"approach_length", l.params.approach_length},
                 {"exit_length", l.params.exit_length},
                 {"control_distance", l.params.control_distance},
                 {"completion_past_box", l.params.completion_past_box},
                 {"merge_handoff", l.params.merge_handoff}};
  j["lanes"] = json::array();
  for (const Lane& lane : l.lanes) {
    json jl{{"id", lane.id},        {"name", lane.name},
            {"approach", lane.approach}, {"signal_group", lane.signal_group},
            {"demand_factor", lane.demand_factor}};
    jl["routes"] = lane.routes;
    jl["route_weights"] = lane.route_weights;
    j["lanes"].push_back(std::move(jl));
  }
  j["routes"] = json::array();
  for (const Route& r : l.routes) {
    json jr{{"id", r.id},
            {"name", r.name},
            {"approach_lane", r.approach_lane},
            {"exit_lane", r.exit_lane},
            {"priority", r.priority == PriorityClass::Main ? "main" : "side"},
            {"turn", to_string(r.turn)},
            {"spawn_s", r.spawn_s},
            {"control_entry_s", r.control_entry_s},
            {"halt_s", r.halt_s},
            {"box_exit_s", r.box_exit_s},
            {"complete_s", r.complete_s}};
    jr["segments"] = json::array();
    for (const Segment& s : r.segments) jr["segments"].push_back(segment_to_json(s));
    j["routes"].push_back(std::move(jr));
  }
  j["conflicts"] = json::array();
  for (const ConflictRelation& c : l.conflicts) {
    j["conflicts"].push_back(json{{"a", c.route_a},
                                  {"b", c.route_b},
                                  {"kind", kind_str(c.kind)},
                                  {"a_begin", c.a_begin},
                                  {"a_end", c.a_end},
                                  {"b_begin", c.b_begin},
                                  {"b_end", c.b_end},
                                  {"a_clear_end", c.a_clear_end},
                                  {"b_clear_end", c.b_clear_end}});
  }
  j["merges"] = json::array();
  for (const ExitMerge& m : l.merges) {
    j["merges"].push_back(json{{"a", m.route_a},
                               {"b", m.route_b},
                               {"a_suffix_start", m.a_suffix_start},
                               {"b_suffix_start", m.b_suffix_start}});
  }
  return j.dump(2);
}

IntersectionLayout layout_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("layout: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != "aim-layout")
    throw std::runtime_error("layout: missing or wrong format tag");
  if (j.value("version", -1) != kFormatVersion)
    throw std::runtime_error("layout: unsupported schema version");

  IntersectionLayout l;
  const auto kind = layout_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw std::runtime_error("layout: unknown kind");
  l.kind = *kind;
  l.box_half_x = j.at("box_half_x").get<double>();
  l.box_half_y = j.at("box_half_y").get<double>();
  const json& p = j.at("params");
  l.params.lane_width = p.at("lane_width").get<double>();
  l.params.vehicle_length = p.at("vehicle_length").get<double>();
  l.params.vehicle_width = p.at("vehicle_width").get<double>();
  l.params.approach_length = p.at("approach_length").get<double>();
  l.params.exit_length = p.at("exit_length").get<double>();
  l.params.control_distance = p.at("control_distance").get<double>();
  l.params.completion_past_box = p.at("completion_past_box").get<double>();
  l.params.merge_handoff = p.at("merge_handoff").get<double>();

  for (const json& jl : j.at("lanes")) {
    Lane lane;
    lane.id = jl.at("id").get<int>();
    lane.name = jl.at("name").get<std::string>();
    lane.approach = jl.at("approach").get<bool>();
    lane.signal_group = jl.at("signal_group").get<int>();
    lane.demand_factor = jl.at("demand_factor").get<double>();
    lane.routes = jl.at("routes").get<std::vector<int>>();
    lane.route_weights = jl.at("route_weights").get<std::vector<double>>();
    if (lane.routes.size() != lane.route_weights.size())
      throw std::runtime_error("layout: lane route/weight size mismatch");
    l.lanes.push_back(std::move(lane));
  }
  for (const json& jr : j.at("routes")) {
    Route r;
    r.id = jr.at("id").get<int>();
    r.name = jr.at("name").get<std::string>();
    r.approach_lane = jr.at("approach_lane").get<int>();
    r.exit_lane = jr.at("exit_lane").get<int>();
    r.priority = jr.at("priority").get<std::string>() == "main" ? PriorityClass::Main
                                                                : PriorityClass::Side;
    const std::string turn = jr.at("turn").get<std::string>();
    r.turn = turn == "through" ? TurnType::Through
                               : (turn == "left" ? TurnType::Left : TurnType::Right);
    for (const json& js : jr.at("segments")) r.segments.push_back(segment_from_json(js));
    if (r.segments.empty()) throw std::runtime_error("layout: route without segments");
    r.finalize();
    r.spawn_s = jr.at("spawn_s").get<double>();
    r.control_entry_s = jr.at("control_entry_s").get<double>();
    r.halt_s = jr.at("halt_s").get<double>();
    r.box_exit_s = jr.at("box_exit_s").get<double>();
    r.complete_s = jr.at("complete_s").get<double>();
    if (r.id != static_cast<int>(l.routes.size()))
      throw std::runtime_error("layout: route ids must be dense and ordered");
    l.routes.push_back(std::move(r));
  }
  for (const json& jc : j.at("conflicts")) {
    ConflictRelation c;
    c.route_a = jc.at("a").get<int>();
    c.route_b = jc.at("b").get<int>();
    c.kind = kind_from(jc.at("kind").get<std::string>());
    c.a_begin = jc.at("a_begin").get<double>();
    c.a_end = jc.at("a_end").get<double>();
    c.b_begin = jc.at("b_begin").get<double>();
    c.b_end = jc.at("b_end").get<double>();
    c.a_clear_end = jc.at("a_clear_end").get<double>();
    c.b_clear_end = jc.at("b_clear_end").get<double>();
    const int n = static_cast<int>(l.routes.size());
    if (c.route_a < 0 || c.route_b < 0 || c.route_a >= n || c.route_b >= n)
      throw std::runtime_error("layout: conflict references unknown route");
    l.conflicts.push_back(c);
  }
  for (const json& jm : j.at("merges")) {
    ExitMerge m;
    m.route_a = jm.at("a").get<int>();
    m.route_b = jm.at("b").get<int>();
    m.a_suffix_start = jm.at("a_suffix_start").get<double>();
    m.b_suffix_start = jm.at("b_suffix_start").get<double>();
    l.merges.push_back(m);
  }
  l.rebuild_index();
  return l;
}

void save_layout(const IntersectionLayout& layout, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("layout: cannot write " + path);
  out << layout_to_json(layout) << "\n";
}

IntersectionLayout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("layout: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return layout_from_json(ss.str());
}

}  // namespace aim::geometry
