#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aim/baselines.hpp"
#include "aim/policy.hpp"
#include "aim/scenegraph.hpp"
#include "aim/world.hpp"

namespace aim::harness {

struct ScenarioConfig {
  geometry::LayoutKind layout = geometry::LayoutKind::L;
  std::string layout_file;  // optional: load instead of build_layout
  std::string controller = "tl";
  std::string weights_file;  // rl controller
  double demand = 0.15;      // vehicles/s per main-road lane
  double duration = 100.0;
  std::uint64_t seed = 1;
  double dt = 0.1;
  behavior::CfParams cf;
  dynamics::MotionLimits limits;
  double spawn_speed = 10.0;
  double t_shift = 1.0;   // shifted-exponential offset
  int vehicle_cap = 0;    // 0 = uncapped; training caps per layout
  bool terminate_on_collision = false;  // training mode
  double stop_threshold = 0.3;
};

struct MetricsRecord {
  int episode_id = 0;
  double flow_rate = 0.0;
  std::vector<double> durations;  // completed vehicles only
  std::vector<bool> stop_flags;   // aligned with durations
  int collision_count = 0;        // collided (and removed) vehicles
  int spawned = 0;
  int completed = 0;
  int active_at_end = 0;
  bool safety_violation = false;  // any collision under a non-learned controller
  int emergency_events = 0;
  double elapsed = 0.0;

  double stop_fraction() const;
  double median_duration() const;
};

double median(std::vector<double> values);
double quantile(std::vector<double> values, double q);

// Arrival times of one spawn lane over [0, horizon): shifted exponential
// inter-arrivals with total mean 1/lane_rate (t_shift + Exp).
std::vector<double> spawn_stream(double lane_rate, double t_shift, double horizon, Rng& rng);

// Per-step world simulation shared by evaluation and training.
class Episode {
 public:
  Episode(const ScenarioConfig& config, const geometry::IntersectionLayout& layout,
          baselines::Controller& controller);

  bool step();  // one dt tick; false once finished
  bool finished() const;
  bool collided() const { return collided_; }
  const std::vector<std::pair<int, int>>& last_collisions() const { return last_collisions_; }
  World& world() { return world_; }
  const ScenarioConfig& config() const { return config_; }
  MetricsRecord metrics() const;

 private:
  void spawn_due();
  void stamp_arrivals();
  void handle_collisions();
  void handle_completions();

  ScenarioConfig config_;
  const geometry::IntersectionLayout& layout_;
  baselines::Controller& controller_;
  World world_;
  Rng rng_;
  std::map<int, std::deque<double>> pending_;  // lane id -> due arrival times
  std::map<int, int> lane_arrival_counts_;
  int next_id_ = 0;
  int next_seq_ = 0;
  MetricsRecord metrics_;
  bool collided_ = false;
  bool terminated_ = false;
  std::vector<std::pair<int, int>> last_collisions_;
};

// Actor-driven controller: control-zone vehicles get policy actions, the rest
// follow the car-following model.
class RlController : public baselines::Controller {
 public:
  RlController(const baselines::ControllerConfig& cfg, const policy::PolicyWeights* weights,
               double exploration_noise, std::uint64_t noise_seed);

  std::vector<double> step(World& world) override;
  std::string name() const override { return "rl"; }

  void set_uniform_random(bool on) { uniform_random_ = on; }
  const scenegraph::SceneGraph& last_graph() const { return last_graph_; }
  const policy::Vector& last_actions() const { return last_actions_; }
  const std::vector<int>& last_ids() const { return last_ids_; }

 private:
  baselines::ControllerConfig cfg_;
  const policy::PolicyWeights* weights_;
  double exploration_noise_;
  Rng noise_rng_;
  bool uniform_random_ = false;
  scenegraph::SceneGraph last_graph_;
  policy::Vector last_actions_;
  std::vector<int> last_ids_;
};

// Builds the configured controller (including "rl" from a weights file) and
// runs one episode.
MetricsRecord run_episode(const ScenarioConfig& config,
                          const geometry::IntersectionLayout& layout);
MetricsRecord run_episode(const ScenarioConfig& config);

struct EpisodeRow {
  std::string controller;
  int run = 0;
  double demand = 0.0;
  std::uint64_t seed = 0;
  MetricsRecord metrics;
};

struct BaselineProtocolConfig {
  geometry::LayoutKind layout = geometry::LayoutKind::L;
  std::vector<std::string> controllers = {"tl", "fifo", "efifo", "pr"};
  std::string rl_weights;  // adds an "rl" column when set
  double demand_lo = 0.05;
  double demand_hi = 0.3;
  int runs = 100;
  std::uint64_t seed = 1;
  double duration = 100.0;
  int parallel = 1;
};

struct BaselineProtocolResult {
  std::vector<EpisodeRow> rows;
  // duration-vs-flow bins per controller: bin -> durations (bins of 0.1 veh/s)
  std::map<std::string, std::map<int, std::vector<double>>> duration_bins;
};

BaselineProtocolResult baseline_protocol(const BaselineProtocolConfig& config);

struct CrossvalConfig {
  std::map<geometry::LayoutKind, std::string> weights;  // trained model per layout
  double demand_lo = 0.2;
  double demand_hi = 0.4;
  int runs = 100;
  std::uint64_t seed = 1;
  double duration = 100.0;
  int parallel = 1;
};

struct CrossvalResult {
  // [model layout][eval layout]
  std::map<geometry::LayoutKind, std::map<geometry::LayoutKind, double>> collision_percent;
  std::map<geometry::LayoutKind, std::map<geometry::LayoutKind, double>> avg_flow;
  std::vector<EpisodeRow> rows;  // controller field holds "model@eval"
};

CrossvalResult crossval_protocol(const CrossvalConfig& config);

// CSV/JSON output (documented schemas, see README).
void write_episode_rows_csv(const std::vector<EpisodeRow>& rows, const std::string& path);
std::string baseline_summary_json(const BaselineProtocolResult& result);
std::string crossval_summary_json(const CrossvalResult& result);

// Episodes distributed over worker threads; deterministic per-index results.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

}  // namespace aim::harness
