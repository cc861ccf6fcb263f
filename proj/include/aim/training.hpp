#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aim/harness.hpp"
#include "aim/policy.hpp"

namespace aim::training {

struct Transition {
  scenegraph::SceneGraph state;       // normalized
  policy::Vector actions;             // aligned with state vertices
  double reward = 0.0;
  scenegraph::SceneGraph next_state;  // normalized
  bool terminal = false;              // collision; horizon timeout bootstraps
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(Transition t);
  std::size_t size() const { return store_.size(); }
  const Transition& at(std::size_t idx) const { return store_[idx]; }
  // Uniform with replacement; deterministic given the rng state.
  std::vector<std::size_t> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t write_ = 0;
  std::vector<Transition> store_;
};

struct RewardSpec {
  double w_flow = 1.0;
  double w_act = 0.1;
  double w_coll = 10.0;
};

// r = w_flow * mean(v/v0) - w_act * mean((a/a_max)^2) - w_coll * [collision],
// means over the acted vehicles still present in the post-step world.
double compute_reward(const World& world, const std::vector<int>& acted_ids,
                      const policy::Vector& actions, bool collision, const RewardSpec& spec,
                      double v0, double a_max);

struct Hyperparams {
  double gamma = 0.99;
  double tau = 0.005;
  int policy_delay = 2;
  double target_noise = 0.2;  // in half-range units
  double noise_clip = 0.5;
  double exploration_noise = 0.1;
  int batch = 64;
  std::size_t buffer_capacity = 100000;
  double lr = 3e-4;
  int warmup_steps = 1000;
  int update_every = 1;
};

struct TrainConfig {
  geometry::LayoutKind layout = geometry::LayoutKind::M;
  long total_steps = 50000;
  std::uint64_t seed = 1;
  Hyperparams hp;
  RewardSpec reward;
  behavior::CfParams cf;
  dynamics::MotionLimits limits;
  double dt = 0.1;
  double episode_duration = 100.0;
  double demand_lo = 0.1;
  double demand_hi = 0.4;
  std::string init_weights;  // warm start (XL bootstraps from a smaller layout)
  int eval_every_episodes = 10;
  double eval_demand = 0.3;
  bool verbose = false;
};

int vehicle_cap_for(geometry::LayoutKind kind);

struct TrainLogRow {
  long step = 0;
  int episode = 0;
  double episode_return = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double eval_flow = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  policy::PolicyWeights weights;
  std::vector<TrainLogRow> log;
  long env_steps = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

// TD3 regression targets y = r + gamma * min(Q1', Q2') with smoothed target
// actions; terminal transitions use y = r.
std::vector<double> critic_target(const ReplayBuffer& buffer,
                                  const std::vector<std::size_t>& batch,
                                  const policy::PolicyWeights& targets, const Hyperparams& hp,
                                  const dynamics::MotionLimits& limits, Rng& rng);

TrainResult td3_train(const TrainConfig& config);

void write_training_log_csv(const std::vector<TrainLogRow>& log, const std::string& path);

}  // namespace aim::training
