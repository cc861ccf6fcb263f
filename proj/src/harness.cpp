#include "aim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "aim/layout_io.hpp"
#include "json.hpp"

namespace aim::harness {

double MetricsRecord::stop_fraction() const {
  if (durations.empty()) return 0.0;
  int stops = 0;
  for (bool s : stop_flags) stops += s ? 1 : 0;
  return static_cast<double>(stops) / static_cast<double>(durations.size());
}

double MetricsRecord::median_duration() const {
  return median(durations);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<double> spawn_stream(double lane_rate, double t_shift, double horizon, Rng& rng) {
  std::vector<double> arrivals;
  if (lane_rate <= 0.0) return arrivals;
  const double exp_mean = 1.0 / lane_rate - t_shift;
  if (exp_mean <= 0.0)
    throw std::invalid_argument("spawn_stream: lane rate exceeds 1/t_shift");
  double t = 0.0;
  while (true) {
    t += t_shift + rng.exponential(exp_mean);
    if (t >= horizon) break;
    arrivals.push_back(t);
  }
  return arrivals;
}

Episode::Episode(const ScenarioConfig& config, const geometry::IntersectionLayout& layout,
                 baselines::Controller& controller)
    : config_(config), layout_(layout), controller_(controller),
      rng_(Rng::mix(config.seed, 0x5eed)) {
  world_.layout = &layout_;
  world_.time = 0.0;
  // Per-lane arrival queues; each lane draws from its own substream so lane
  // counts do not perturb each other across configs.
  for (const auto& lane : layout_.lanes) {
    if (!lane.approach || lane.routes.empty()) continue;
    Rng lane_rng(Rng::mix(config.seed, static_cast<std::uint64_t>(lane.id) + 101));
    const double rate = config_.demand * lane.demand_factor;
    auto arrivals = spawn_stream(rate, config_.t_shift, config_.duration, lane_rng);
    pending_[lane.id] = std::deque<double>(arrivals.begin(), arrivals.end());
  }
}

void Episode::spawn_due() {
  for (auto& [lane_id, queue] : pending_) {
    if (queue.empty() || queue.front() > world_.time) continue;
    if (config_.vehicle_cap > 0 &&
        static_cast<int>(world_.vehicles.size()) >= config_.vehicle_cap)
      continue;  // training cap; arrival stays pending
    const geometry::Lane& lane = layout_.lane(lane_id);

    // Safe-insertion check against the nearest vehicle still near the spawn
    // point of this lane; suspended while jammed.
    double min_gap = kInf;
    double leader_speed = 0.0;
    for (const Vehicle& v : world_.vehicles) {
      if (world_.route_of(v).approach_lane != lane_id) continue;
      const double gap = v.st.s - 0.5 * v.st.length - 0.5 * layout_.params.vehicle_length;
      if (gap < min_gap) {
        min_gap = gap;
        leader_speed = v.st.v;
      }
    }
    double speed = config_.spawn_speed;
    if (std::isfinite(min_gap)) {
      if (min_gap < config_.cf.s0 + 1.0) continue;  // jam reaches the spawn point
      const double safe = std::sqrt(std::max(
          0.0, 2.0 * config_.cf.b * (min_gap - config_.cf.s0) + leader_speed * leader_speed));
      speed = std::min(speed, safe);
      if (speed < 1.0) continue;
    }

    queue.pop_front();
    // Maneuver pick keyed by (lane, arrival index): identical traffic across
    // controllers for matched seeds even when jam suppression shifts spawns.
    const int arrival_index = lane_arrival_counts_[lane_id]++;
    Rng pick(Rng::mix(config_.seed, 100003 * static_cast<std::uint64_t>(lane_id + 1) +
                                        static_cast<std::uint64_t>(arrival_index)));
    const int slot = pick.pick_weighted(lane.route_weights);
    Vehicle veh;
    veh.st.id = next_id_++;
    veh.st.route = lane.routes[static_cast<std::size_t>(slot)];
    veh.st.s = 0.0;
    veh.st.v = speed;
    veh.st.spawn_time = world_.time;
    veh.st.length = layout_.params.vehicle_length;
    veh.st.width = layout_.params.vehicle_width;
    world_.vehicles.push_back(veh);
    ++metrics_.spawned;
  }
}

void Episode::stamp_arrivals() {
  for (Vehicle& v : world_.vehicles) {
    if (v.arrival_stamp < 0.0 && world_.in_control_zone(v)) {
      v.arrival_stamp = world_.time;
      v.arrival_seq = next_seq_++;
    }
  }
}

void Episode::handle_collisions() {
  std::vector<dynamics::VehicleState> states;
  states.reserve(world_.vehicles.size());
  for (const Vehicle& v : world_.vehicles) states.push_back(v.st);
  last_collisions_ = dynamics::check_collisions(states, layout_);
  if (last_collisions_.empty()) return;

  collided_ = true;
  if (controller_.name() != "rl" && controller_.name() != "cf")
    metrics_.safety_violation = true;
  std::vector<int> hit;
  for (const auto& [a, b] : last_collisions_) {
    hit.push_back(a);
    hit.push_back(b);
  }
  std::sort(hit.begin(), hit.end());
  hit.erase(std::unique(hit.begin(), hit.end()), hit.end());
  metrics_.collision_count += static_cast<int>(hit.size());
  if (config_.terminate_on_collision) {
    terminated_ = true;
    return;
  }
  std::erase_if(world_.vehicles, [&](const Vehicle& v) {
    return std::binary_search(hit.begin(), hit.end(), v.st.id);
  });
}

void Episode::handle_completions() {
  std::erase_if(world_.vehicles, [&](const Vehicle& v) {
    if (v.st.s < world_.route_of(v).complete_s) return false;
    metrics_.durations.push_back(world_.time - v.st.spawn_time);
    metrics_.stop_flags.push_back(v.stopped);
    metrics_.emergency_events += v.cf.emergency_count;
    ++metrics_.completed;
    return true;
  });
}

bool Episode::step() {
  if (finished()) return false;
  spawn_due();
  stamp_arrivals();

  const std::vector<double> acc = controller_.step(world_);
  for (std::size_t i = 0; i < world_.vehicles.size(); ++i) {
    Vehicle& v = world_.vehicles[i];
    v.st = dynamics::step_vehicle(v.st, acc[i], config_.dt, config_.limits);
    if (v.st.v < config_.stop_threshold) v.stopped = true;
  }
  world_.time += config_.dt;

  handle_collisions();
  if (!terminated_) handle_completions();
  return !finished();
}

bool Episode::finished() const {
  return terminated_ || world_.time >= config_.duration - 1e-9;
}

MetricsRecord Episode::metrics() const {
  MetricsRecord m = metrics_;
  m.active_at_end = static_cast<int>(world_.vehicles.size());
  m.elapsed = world_.time;
  m.flow_rate = static_cast<double>(m.completed) / config_.duration;
  return m;
}

RlController::RlController(const baselines::ControllerConfig& cfg,
                           const policy::PolicyWeights* weights, double exploration_noise,
                           std::uint64_t noise_seed)
    : cfg_(cfg), weights_(weights), exploration_noise_(exploration_noise),
      noise_rng_(noise_seed) {}

std::vector<double> RlController::step(World& world) {
  last_graph_ = scenegraph::normalize_features(scenegraph::build_graph(world), world, {},
                                               cfg_.limits);
  const policy::GraphInput gi = policy::GraphInput::from(last_graph_);
  last_actions_ = policy::actor_forward(gi, weights_->actor, cfg_.limits);
  last_ids_.assign(last_graph_.vertices.size(), -1);
  for (std::size_t k = 0; k < last_graph_.vertices.size(); ++k)
    last_ids_[k] = last_graph_.vertices[k].vehicle_id;

  const double half = 0.5 * (cfg_.limits.a_max - cfg_.limits.a_min);
  for (int k = 0; k < last_actions_.size(); ++k) {
    if (uniform_random_) {
      last_actions_(k) = noise_rng_.uniform(cfg_.limits.a_min, cfg_.limits.a_max);
    } else if (exploration_noise_ > 0.0) {
      last_actions_(k) = clamp(
          last_actions_(k) + noise_rng_.normal(0.0, exploration_noise_ * half),
          cfg_.limits.a_min, cfg_.limits.a_max);
    }
  }

  std::vector<double> acc(world.vehicles.size(), 0.0);
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    Vehicle& v = world.vehicles[i];
    int vertex = -1;
    for (std::size_t k = 0; k < last_ids_.size(); ++k)
      if (last_ids_[k] == v.st.id) {
        vertex = static_cast<int>(k);
        break;
      }
    if (vertex >= 0)
      acc[i] = last_actions_(vertex);
    else
      acc[i] = behavior::cf_accel(v.st.v, behavior::resolve_leader(world, i, true), cfg_.cf,
                                  cfg_.limits, v.cf, world.time);
  }
  return acc;
}

namespace {

std::unique_ptr<baselines::Controller> build_controller(const ScenarioConfig& config,
                                                        const geometry::IntersectionLayout& layout,
                                                        const policy::PolicyWeights* weights) {
  baselines::ControllerConfig cc;
  cc.cf = config.cf;
  cc.limits = config.limits;
  cc.dt = config.dt;
  if (config.controller == "rl") {
    if (weights == nullptr)
      throw std::invalid_argument("rl controller requires a weights file");
    return std::make_unique<RlController>(cc, weights, 0.0, Rng::mix(config.seed, 777));
  }
  return baselines::make_controller(config.controller, cc, layout);
}

}  // namespace

MetricsRecord run_episode(const ScenarioConfig& config,
                          const geometry::IntersectionLayout& layout) {
  std::unique_ptr<policy::PolicyWeights> weights;
  if (config.controller == "rl") {
    if (config.weights_file.empty())
      throw std::invalid_argument("rl controller requires a weights file");
    weights = std::make_unique<policy::PolicyWeights>(policy::load_weights(config.weights_file));
  }
  auto controller = build_controller(config, layout, weights.get());
  Episode episode(config, layout, *controller);
  while (episode.step()) {
  }
  return episode.metrics();
}

MetricsRecord run_episode(const ScenarioConfig& config) {
  const geometry::IntersectionLayout layout =
      config.layout_file.empty() ? geometry::build_layout(config.layout)
                                 : geometry::load_layout(config.layout_file);
  return run_episode(config, layout);
}

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, workers);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) break;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

BaselineProtocolResult baseline_protocol(const BaselineProtocolConfig& config) {
  const geometry::IntersectionLayout layout = geometry::build_layout(config.layout);
  std::unique_ptr<policy::PolicyWeights> weights;
  std::vector<std::string> controllers = config.controllers;
  if (!config.rl_weights.empty()) {
    weights = std::make_unique<policy::PolicyWeights>(policy::load_weights(config.rl_weights));
    controllers.push_back("rl");
  }

  // Matched demands and seeds across controllers.
  Rng demand_rng(Rng::mix(config.seed, 0xdead));
  std::vector<double> demands(static_cast<std::size_t>(config.runs));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.runs));
  for (int k = 0; k < config.runs; ++k) {
    demands[static_cast<std::size_t>(k)] =
        demand_rng.uniform(config.demand_lo, config.demand_hi);
    seeds[static_cast<std::size_t>(k)] = Rng::mix(config.seed, static_cast<std::uint64_t>(k));
  }

  BaselineProtocolResult result;
  const int total = config.runs * static_cast<int>(controllers.size());
  result.rows.resize(static_cast<std::size_t>(total));
  parallel_for(total, config.parallel, [&](int idx) {
    const int run = idx % config.runs;
    const std::string& ctrl = controllers[static_cast<std::size_t>(idx / config.runs)];
    ScenarioConfig sc;
    sc.layout = config.layout;
    sc.controller = ctrl;
    sc.demand = demands[static_cast<std::size_t>(run)];
    sc.duration = config.duration;
    sc.seed = seeds[static_cast<std::size_t>(run)];
    std::unique_ptr<baselines::Controller> controller;
    baselines::ControllerConfig cc;
    cc.cf = sc.cf;
    cc.limits = sc.limits;
    cc.dt = sc.dt;
    if (ctrl == "rl")
      controller = std::make_unique<RlController>(cc, weights.get(), 0.0, Rng::mix(sc.seed, 777));
    else
      controller = baselines::make_controller(ctrl, cc, layout);
    Episode episode(sc, layout, *controller);
    while (episode.step()) {
    }
    EpisodeRow row;
    row.controller = ctrl;
    row.run = run;
    row.demand = sc.demand;
    row.seed = sc.seed;
    row.metrics = episode.metrics();
    row.metrics.episode_id = run;
    result.rows[static_cast<std::size_t>(idx)] = std::move(row);
  });

  for (const EpisodeRow& row : result.rows) {
    const int bin = static_cast<int>(std::floor(row.metrics.flow_rate / 0.1));
    auto& bucket = result.duration_bins[row.controller][bin];
    bucket.insert(bucket.end(), row.metrics.durations.begin(), row.metrics.durations.end());
  }
  return result;
}

CrossvalResult crossval_protocol(const CrossvalConfig& config) {
  using geometry::LayoutKind;
  const std::vector<LayoutKind> kinds = {LayoutKind::S, LayoutKind::M, LayoutKind::L,
                                         LayoutKind::XL};
  std::map<LayoutKind, geometry::IntersectionLayout> layouts;
  std::map<LayoutKind, policy::PolicyWeights> models;
  for (LayoutKind k : kinds) {
    layouts.emplace(k, geometry::build_layout(k));
    const auto it = config.weights.find(k);
    if (it == config.weights.end())
      throw std::invalid_argument(std::string("crossval: missing weights for layout ") +
                                  geometry::to_string(k));
    models.emplace(k, policy::load_weights(it->second));
  }

  Rng demand_rng(Rng::mix(config.seed, 0xc001));
  std::vector<double> demands(static_cast<std::size_t>(config.runs));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.runs));
  for (int k = 0; k < config.runs; ++k) {
    demands[static_cast<std::size_t>(k)] =
        demand_rng.uniform(config.demand_lo, config.demand_hi);
    seeds[static_cast<std::size_t>(k)] = Rng::mix(config.seed, 1000 + static_cast<std::uint64_t>(k));
  }

  CrossvalResult result;
  struct Cell {
    long collided = 0;
    long spawned = 0;
    double flow_sum = 0.0;
  };
  std::map<LayoutKind, std::map<LayoutKind, Cell>> cells;

  const int total = 16 * config.runs;
  std::vector<EpisodeRow> rows(static_cast<std::size_t>(total));
  parallel_for(total, config.parallel, [&](int idx) {
    const int run = idx % config.runs;
    const int pair = idx / config.runs;
    const LayoutKind model = kinds[static_cast<std::size_t>(pair / 4)];
    const LayoutKind eval = kinds[static_cast<std::size_t>(pair % 4)];

    ScenarioConfig sc;
    sc.layout = eval;
    sc.controller = "rl";
    sc.demand = demands[static_cast<std::size_t>(run)];
    sc.duration = config.duration;
    sc.seed = seeds[static_cast<std::size_t>(run)];
    baselines::ControllerConfig cc;
    cc.cf = sc.cf;
    cc.limits = sc.limits;
    cc.dt = sc.dt;
    RlController controller(cc, &models.at(model), 0.0, Rng::mix(sc.seed, 777));
    Episode episode(sc, layouts.at(eval), controller);
    while (episode.step()) {
    }
    EpisodeRow row;
    row.controller = std::string(geometry::to_string(model)) + "@" + geometry::to_string(eval);
    row.run = run;
    row.demand = sc.demand;
    row.seed = sc.seed;
    row.metrics = episode.metrics();
    rows[static_cast<std::size_t>(idx)] = std::move(row);
  });

  for (int idx = 0; idx < total; ++idx) {
    const int pair = idx / config.runs;
    const LayoutKind model = kinds[static_cast<std::size_t>(pair / 4)];
    const LayoutKind eval = kinds[static_cast<std::size_t>(pair % 4)];
    Cell& c = cells[model][eval];
    const MetricsRecord& m = rows[static_cast<std::size_t>(idx)].metrics;
    c.collided += m.collision_count;
    c.spawned += m.spawned;
    c.flow_sum += m.flow_rate;
  }
  for (LayoutKind model : kinds) {
    for (LayoutKind eval : kinds) {
      const Cell& c = cells[model][eval];
      result.collision_percent[model][eval] =
          c.spawned > 0 ? 100.0 * static_cast<double>(c.collided) / static_cast<double>(c.spawned)
                        : 0.0;
      result.avg_flow[model][eval] = c.flow_sum / static_cast<double>(config.runs);
    }
  }
  result.rows = std::move(rows);
  return result;
}

void write_episode_rows_csv(const std::vector<EpisodeRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "controller,run,demand,seed,flow_rate,completed,spawned,collisions,"
         "stop_fraction,median_duration,active_at_end,safety_violation\n";
  for (const EpisodeRow& r : rows) {
    out << r.controller << ',' << r.run << ',' << r.demand << ',' << r.seed << ','
        << r.metrics.flow_rate << ',' << r.metrics.completed << ',' << r.metrics.spawned << ','
        << r.metrics.collision_count << ',' << r.metrics.stop_fraction() << ','
        << r.metrics.median_duration() << ',' << r.metrics.active_at_end << ','
        << (r.metrics.safety_violation ? 1 : 0) << '\n';
  }
}

std::string baseline_summary_json(const BaselineProtocolResult& result) {
  nlohmann::json j;
  std::map<std::string, std::vector<double>> flows, stops, durations;
  for (const EpisodeRow& r : result.rows) {
    flows[r.controller].push_back(r.metrics.flow_rate);
    stops[r.controller].push_back(r.metrics.stop_fraction());
    for (double d : r.metrics.durations) durations[r.controller].push_back(d);
  }
  for (const auto& [ctrl, values] : flows) {
    nlohmann::json c;
    c["flow_rate"] = {{"median", median(values)},
                      {"q25", quantile(values, 0.25)},
                      {"q75", quantile(values, 0.75)},
                      {"max", *std::max_element(values.begin(), values.end())}};
    c["stop_fraction"] = {{"median", median(stops[ctrl])},
                          {"q25", quantile(stops[ctrl], 0.25)},
                          {"q75", quantile(stops[ctrl], 0.75)}};
    c["duration"] = {{"median", median(durations[ctrl])},
                     {"q25", quantile(durations[ctrl], 0.25)},
                     {"q75", quantile(durations[ctrl], 0.75)}};
    nlohmann::json bins = nlohmann::json::array();
    const auto it = result.duration_bins.find(ctrl);
    if (it != result.duration_bins.end()) {
      for (const auto& [bin, values_in_bin] : it->second) {
        if (values_in_bin.size() < 5) continue;  // suppress sparse bins
        bins.push_back({{"flow_lo", 0.1 * bin},
                        {"flow_hi", 0.1 * (bin + 1)},
                        {"count", values_in_bin.size()},
                        {"median_duration", median(values_in_bin)},
                        {"q25", quantile(values_in_bin, 0.25)},
                        {"q75", quantile(values_in_bin, 0.75)}});
      }
    }
    c["duration_vs_flow"] = std::move(bins);
    j[ctrl] = std::move(c);
  }
  return j.dump(2);
}

std::string crossval_summary_json(const CrossvalResult& result) {
  nlohmann::json j;
  for (const auto& [model, row] : result.collision_percent) {
    for (const auto& [eval, value] : row) {
      j["collision_percent"][geometry::to_string(model)][geometry::to_string(eval)] = value;
      j["avg_flow"][geometry::to_string(model)][geometry::to_string(eval)] =
          result.avg_flow.at(model).at(eval);
    }
  }
  return j.dump(2);
}

}  // namespace aim::harness
