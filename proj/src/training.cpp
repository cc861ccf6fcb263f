#include "aim/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace aim::training {

void ReplayBuffer::push(Transition t) {
  if (store_.size() < capacity_) {
    store_.push_back(std::move(t));
    return;
  }
  store_[write_] = std::move(t);  // FIFO eviction
  write_ = (write_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  std::vector<std::size_t> idx(batch);
  for (std::size_t i = 0; i < batch; ++i)
    idx[i] = static_cast<std::size_t>(rng.uniform() * static_cast<double>(store_.size()));
  return idx;
}

double compute_reward(const World& world, const std::vector<int>& acted_ids,
                      const policy::Vector& actions, bool collision, const RewardSpec& spec,
                      double v0, double a_max) {
  double speed_sum = 0.0;
  int present = 0;
  for (int i = 0; i < static_cast<int>(acted_ids.size()); ++i) {
    for (const Vehicle& v : world.vehicles) {
      if (v.st.id == acted_ids[static_cast<std::size_t>(i)]) {
        speed_sum += v.st.v / v0;
        ++present;
        break;
      }
    }
  }
  double act_sum = 0.0;
  for (int i = 0; i < actions.size(); ++i) {
    const double a = actions(i) / a_max;
    act_sum += a * a;
  }
  const double flow_term = present > 0 ? speed_sum / present : 0.0;
  const double act_term = actions.size() > 0 ? act_sum / static_cast<double>(actions.size()) : 0.0;
  return spec.w_flow * flow_term - spec.w_act * act_term - (collision ? spec.w_coll : 0.0);
}

int vehicle_cap_for(geometry::LayoutKind kind) {
  switch (kind) {
    case geometry::LayoutKind::S: return 8;
    case geometry::LayoutKind::M: return 12;
    case geometry::LayoutKind::L: return 18;
    case geometry::LayoutKind::XL: return 24;
  }
  return 12;
}

namespace {

// Per-tensor Adam state over the weight structs' flat views.
class Adam {
 public:
  template <class W>
  explicit Adam(W& weights) {
    for_each(weights, [&](double*, long n) {
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    });
  }

  template <class W, class G>
  void step(W& weights, G& grads, double lr) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    std::size_t slot = 0;
    std::vector<std::pair<double*, long>> w_views, g_views;
    for_each(weights, [&](double* d, long n) { w_views.emplace_back(d, n); });
    for_each(grads, [&](double* d, long n) { g_views.emplace_back(d, n); });
    for (slot = 0; slot < w_views.size(); ++slot) {
      double* w = w_views[slot].first;
      double* g = g_views[slot].first;
      auto& m = m_[slot];
      auto& v = v_[slot];
      const long n = w_views[slot].second;
      for (long k = 0; k < n; ++k) {
        m[static_cast<std::size_t>(k)] = b1 * m[static_cast<std::size_t>(k)] + (1.0 - b1) * g[k];
        v[static_cast<std::size_t>(k)] =
            b2 * v[static_cast<std::size_t>(k)] + (1.0 - b2) * g[k] * g[k];
        const double mh = m[static_cast<std::size_t>(k)] / c1;
        const double vh = v[static_cast<std::size_t>(k)] / c2;
        w[k] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
  }

 private:
  template <class W, class F>
  static void for_each(W& weights, F&& f) {
    policy::for_each_tensor(weights, "", [&](const std::string&, auto& t) {
      f(t.data(), static_cast<long>(t.size()));
    });
  }

  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

template <class W>
void soft_update(W& target, W& online, double tau) {
  std::vector<std::pair<double*, long>> t_views, o_views;
  policy::for_each_tensor(target, "", [&](const std::string&, auto& t) {
    t_views.emplace_back(t.data(), static_cast<long>(t.size()));
  });
  policy::for_each_tensor(online, "", [&](const std::string&, auto& t) {
    o_views.emplace_back(t.data(), static_cast<long>(t.size()));
  });
  for (std::size_t s = 0; s < t_views.size(); ++s)
    for (long k = 0; k < t_views[s].second; ++k)
      t_views[s].first[k] = (1.0 - tau) * t_views[s].first[k] + tau * o_views[s].first[k];
}

policy::Vector smoothed_target_action(const policy::GraphInput& g,
                                      const policy::ActorWeights& actor_t,
                                      const Hyperparams& hp,
                                      const dynamics::MotionLimits& limits, Rng& rng) {
  policy::Vector a = policy::actor_forward(g, actor_t, limits);
  const double half = 0.5 * (limits.a_max - limits.a_min);
  for (int i = 0; i < a.size(); ++i) {
    const double noise = clamp(rng.normal(0.0, hp.target_noise * half),
                               -hp.noise_clip * half, hp.noise_clip * half);
    a(i) = clamp(a(i) + noise, limits.a_min, limits.a_max);
  }
  return a;
}

}  // namespace

std::vector<double> critic_target(const ReplayBuffer& buffer,
                                  const std::vector<std::size_t>& batch,
                                  const policy::PolicyWeights& targets, const Hyperparams& hp,
                                  const dynamics::MotionLimits& limits, Rng& rng) {
  std::vector<double> y(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Transition& t = buffer.at(batch[b]);
    if (t.terminal || t.next_state.vertices.empty()) {
      y[b] = t.reward;
      continue;
    }
    const policy::GraphInput g = policy::GraphInput::from(t.next_state);
    const policy::Vector a = smoothed_target_action(g, targets.actor, hp, limits, rng);
    const double q1 = policy::critic_forward(g, a, targets.critic1, limits);
    const double q2 = policy::critic_forward(g, a, targets.critic2, limits);
    y[b] = t.reward + hp.gamma * std::min(q1, q2);
  }
  return y;
}

TrainResult td3_train(const TrainConfig& config) {
  const geometry::IntersectionLayout layout = geometry::build_layout(config.layout);

  policy::PolicyWeights weights = config.init_weights.empty()
                                      ? policy::init_policy(config.seed)
                                      : policy::load_weights(config.init_weights);
  policy::PolicyWeights targets = weights;

  Adam actor_opt(weights.actor);
  Adam critic1_opt(weights.critic1);
  Adam critic2_opt(weights.critic2);

  ReplayBuffer buffer(config.hp.buffer_capacity);
  Rng train_rng(Rng::mix(config.seed, 0x7d3));
  Rng episode_rng(Rng::mix(config.seed, 0xe915));

  baselines::ControllerConfig cc;
  cc.cf = config.cf;
  cc.limits = config.limits;
  cc.dt = config.dt;

  TrainResult result;
  long env_steps = 0;
  long updates = 0;
  int episode_idx = 0;
  double critic_loss_acc = 0.0;
  double actor_loss_acc = 0.0;
  long critic_loss_count = 0;
  long actor_loss_count = 0;

  const dynamics::MotionLimits& lim = config.limits;

  while (env_steps < config.total_steps) {
    harness::ScenarioConfig sc;
    sc.layout = config.layout;
    sc.controller = "rl";
    sc.demand = episode_rng.uniform(config.demand_lo, config.demand_hi);
    sc.duration = config.episode_duration;
    sc.seed = Rng::mix(config.seed, 5000 + static_cast<std::uint64_t>(episode_idx));
    sc.dt = config.dt;
    sc.cf = config.cf;
    sc.limits = config.limits;
    sc.vehicle_cap = vehicle_cap_for(config.layout);
    sc.terminate_on_collision = true;

    harness::RlController controller(cc, &weights, config.hp.exploration_noise,
                                     Rng::mix(sc.seed, 0xac7));
    harness::Episode episode(sc, layout, controller);
    double episode_return = 0.0;

    while (env_steps < config.total_steps) {
      controller.set_uniform_random(env_steps < config.hp.warmup_steps);
      const bool more = episode.step();
      ++env_steps;

      if (!controller.last_ids().empty()) {
        Transition t;
        t.state = controller.last_graph();
        t.actions = controller.last_actions();
        t.terminal = episode.collided();
        t.next_state = scenegraph::normalize_features(
            scenegraph::build_graph(episode.world()), episode.world(), {}, lim);
        t.reward = compute_reward(episode.world(), controller.last_ids(), t.actions,
                                  episode.collided(), config.reward, config.cf.v0, lim.a_max);
        episode_return += t.reward;
        buffer.push(std::move(t));
      }

      if (buffer.size() >= static_cast<std::size_t>(config.hp.warmup_steps) &&
          env_steps % config.hp.update_every == 0) {
        // Critic regression.
        const auto batch = buffer.sample(static_cast<std::size_t>(config.hp.batch), train_rng);
        const auto y = critic_target(buffer, batch, targets, config.hp, lim, train_rng);
        policy::CriticWeights grad1, grad2;
        double loss = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const Transition& t = buffer.at(batch[b]);
          const policy::GraphInput g = policy::GraphInput::from(t.state);
          policy::CriticTrace tr1, tr2;
          const double q1 = policy::critic_forward(g, t.actions, weights.critic1, lim, &tr1);
          const double q2 = policy::critic_forward(g, t.actions, weights.critic2, lim, &tr2);
          const double e1 = q1 - y[b];
          const double e2 = q2 - y[b];
          loss += (e1 * e1 + e2 * e2) / static_cast<double>(batch.size());
          policy::critic_backward(tr1, weights.critic1,
                                  2.0 * e1 / static_cast<double>(batch.size()), grad1, lim);
          policy::critic_backward(tr2, weights.critic2,
                                  2.0 * e2 / static_cast<double>(batch.size()), grad2, lim);
        }
        if (!std::isfinite(loss))
          throw TrainingDiverged("critic loss is not finite at step " + std::to_string(env_steps));
        critic1_opt.step(weights.critic1, grad1, config.hp.lr);
        critic2_opt.step(weights.critic2, grad2, config.hp.lr);
        critic_loss_acc += loss;
        ++critic_loss_count;
        ++updates;

        if (updates % config.hp.policy_delay == 0) {
          // Deterministic policy gradient through critic1.
          policy::ActorWeights actor_grad;
          policy::CriticWeights scratch;
          double actor_loss = 0.0;
          for (std::size_t b = 0; b < batch.size(); ++b) {
            const Transition& t = buffer.at(batch[b]);
            if (t.state.vertices.empty()) continue;
            const policy::GraphInput g = policy::GraphInput::from(t.state);
            policy::ActorTrace at;
            const policy::Vector a = policy::actor_forward(g, weights.actor, lim, &at);
            policy::CriticTrace qt;
            const double q = policy::critic_forward(g, a, weights.critic1, lim, &qt);
            actor_loss -= q / static_cast<double>(batch.size());
            policy::Vector d_actions;
            policy::critic_backward(qt, weights.critic1,
                                    -1.0 / static_cast<double>(batch.size()), scratch, lim,
                                    &d_actions);
            policy::actor_backward(at, weights.actor, d_actions, actor_grad);
          }
          if (!std::isfinite(actor_loss))
            throw TrainingDiverged("actor loss is not finite at step " +
                                   std::to_string(env_steps));
          actor_opt.step(weights.actor, actor_grad, config.hp.lr);
          actor_loss_acc += actor_loss;
          ++actor_loss_count;
          soft_update(targets.actor, weights.actor, config.hp.tau);
          soft_update(targets.critic1, weights.critic1, config.hp.tau);
          soft_update(targets.critic2, weights.critic2, config.hp.tau);
        }
      }
      if (!more) break;
    }

    TrainLogRow row;
    row.step = env_steps;
    row.episode = episode_idx;
    row.episode_return = episode_return;
    row.critic_loss = critic_loss_count > 0 ? critic_loss_acc / critic_loss_count : 0.0;
    row.actor_loss = actor_loss_count > 0 ? actor_loss_acc / actor_loss_count : 0.0;
    critic_loss_acc = actor_loss_acc = 0.0;
    critic_loss_count = actor_loss_count = 0;

    if (config.eval_every_episodes > 0 && episode_idx % config.eval_every_episodes == 0) {
      harness::ScenarioConfig ec;
      ec.layout = config.layout;
      ec.controller = "rl";
      ec.demand = config.eval_demand;
      ec.duration = config.episode_duration;
      ec.seed = Rng::mix(config.seed, 90000 + static_cast<std::uint64_t>(episode_idx));
      ec.dt = config.dt;
      ec.cf = config.cf;
      ec.limits = config.limits;
      harness::RlController eval_controller(cc, &weights, 0.0, Rng::mix(ec.seed, 0xe));
      harness::Episode eval_episode(ec, layout, eval_controller);
      while (eval_episode.step()) {
      }
      row.eval_flow = eval_episode.metrics().flow_rate;
    }
    result.log.push_back(row);
    if (config.verbose) {
      std::fprintf(stderr, "[train %s seed %llu] step %ld episode %d return %.2f eval_flow %.3f\n",
                   geometry::to_string(config.layout),
                   static_cast<unsigned long long>(config.seed), env_steps, episode_idx,
                   episode_return, row.eval_flow);
    }
    ++episode_idx;
  }

  result.weights = weights;
  result.env_steps = env_steps;
  return result;
}

void write_training_log_csv(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,episode,episode_return,critic_loss,actor_loss,eval_flow_rate\n";
  for (const TrainLogRow& row : log) {
    out << row.step << ',' << row.episode << ',' << row.episode_return << ',' << row.critic_loss
        << ',' << row.actor_loss << ',';
    if (std::isfinite(row.eval_flow)) out << row.eval_flow;
    out << '\n';
  }
}

}  // namespace aim::training
