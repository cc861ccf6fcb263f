#include <cmath>

#include "aim/training.hpp"
#include "doctest.h"

using namespace aim;
using namespace aim::training;

namespace {

scenegraph::SceneGraph tiny_graph(Rng& rng, int n) {
  scenegraph::SceneGraph g;
  for (int i = 0; i < n; ++i) {
    scenegraph::GraphVertex v;
    v.vehicle_id = i;
    for (auto& f : v.h) f = rng.uniform(-1.0, 1.0);
    g.vertices.push_back(v);
  }
  for (int i = 0; i + 1 < n; ++i) {
    scenegraph::GraphEdge e;
    e.src = i;
    e.dst = i + 1;
    e.type = scenegraph::EdgeType::Crossing;
    e.g = {rng.uniform(0.0, 5.0), rng.uniform(-1.0, 1.0)};
    g.edges.push_back(e);
  }
  g.normalized = true;
  return g;
}

Transition random_transition(Rng& rng, int n, bool terminal) {
  Transition t;
  t.state = tiny_graph(rng, n);
  t.next_state = tiny_graph(rng, n);
  t.actions = policy::Vector(n);
  for (int i = 0; i < n; ++i) t.actions(i) = rng.uniform(-5.0, 3.0);
  t.reward = rng.uniform(-1.0, 1.0);
  t.terminal = terminal;
  return t;
}

}  // namespace

TEST_CASE("replay buffer: FIFO eviction and seeded sampling") {
  Rng rng(1);
  ReplayBuffer buf(4);
  for (int k = 0; k < 6; ++k) {
    Transition t = random_transition(rng, 2, false);
    t.reward = k;
    buf.push(std::move(t));
  }
  CHECK(buf.size() == 4);
  // 0 and 1 evicted first.
  std::vector<double> rewards;
  for (std::size_t i = 0; i < buf.size(); ++i) rewards.push_back(buf.at(i).reward);
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{2.0, 3.0, 4.0, 5.0});

  Rng s1(77), s2(77);
  CHECK(buf.sample(8, s1) == buf.sample(8, s2));
}

TEST_CASE("compute_reward formula") {
  const auto layout = geometry::build_layout(geometry::LayoutKind::M);
  World w;
  w.layout = &layout;
  RewardSpec spec;

  Vehicle a;
  a.st.id = 0;
  a.st.route = 0;
  a.st.v = 10.0;
  Vehicle b = a;
  b.st.id = 1;
  b.st.v = 10.0;
  w.vehicles = {a, b};

  policy::Vector zero(2);
  zero.setZero();
  // All vehicles at v0, zero actions, no collision -> w_flow.
  CHECK(compute_reward(w, {0, 1}, zero, false, spec, 10.0, 3.0) == doctest::Approx(1.0));
  // Collision subtracts w_coll.
  CHECK(compute_reward(w, {0, 1}, zero, true, spec, 10.0, 3.0) == doctest::Approx(1.0 - 10.0));

  // Mixed state against a direct scalar evaluation.
  w.vehicles[0].st.v = 4.0;
  w.vehicles[1].st.v = 7.0;
  policy::Vector act(2);
  act << 1.5, -3.0;
  const double expect = 1.0 * ((0.4 + 0.7) / 2.0) -
                        0.1 * ((1.5 / 3.0) * (1.5 / 3.0) + (-3.0 / 3.0) * (-3.0 / 3.0)) / 2.0;
  CHECK(compute_reward(w, {0, 1}, act, false, spec, 10.0, 3.0) == doctest::Approx(expect));

  // Vehicles that left the scene drop out of the speed mean.
  CHECK(compute_reward(w, {0, 5}, act, false, spec, 10.0, 3.0) ==
        doctest::Approx(1.0 * 0.4 - 0.1 * ((0.25 + 1.0) / 2.0)));
}

TEST_CASE("critic_target: terminal and gamma-zero short-circuits") {
  Rng rng(3);
  ReplayBuffer buf(16);
  buf.push(random_transition(rng, 3, true));
  buf.push(random_transition(rng, 3, false));
  const policy::PolicyWeights targets = policy::init_policy(11);
  const dynamics::MotionLimits lim;

  Hyperparams hp;
  Rng noise(5);
  const auto y = critic_target(buf, {0}, targets, hp, lim, noise);
  CHECK(y[0] == buf.at(0).reward);

  hp.gamma = 0.0;
  Rng noise2(5);
  const auto y2 = critic_target(buf, {0, 1}, targets, hp, lim, noise2);
  CHECK(y2[0] == buf.at(0).reward);
  CHECK(y2[1] == buf.at(1).reward);
}

TEST_CASE("critic_target matches a step-by-step recomputation") {
  Rng rng(9);
  ReplayBuffer buf(16);
  for (int k = 0; k < 6; ++k) buf.push(random_transition(rng, 2 + k % 3, k % 5 == 4));
  const policy::PolicyWeights targets = policy::init_policy(13);
  const dynamics::MotionLimits lim;
  Hyperparams hp;

  const std::vector<std::size_t> batch = {0, 2, 4, 5};
  Rng noise_a(21);
  const auto y = critic_target(buf, batch, targets, hp, lim, noise_a);

  Rng noise_b(21);
  const double half = 0.5 * (lim.a_max - lim.a_min);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Transition& t = buf.at(batch[b]);
    double expect;
    if (t.terminal || t.next_state.vertices.empty()) {
      expect = t.reward;
    } else {
      const policy::GraphInput g = policy::GraphInput::from(t.next_state);
      policy::Vector a = policy::actor_forward(g, targets.actor, lim);
      for (int i = 0; i < a.size(); ++i) {
        const double noise = clamp(noise_b.normal(0.0, hp.target_noise * half),
                                   -hp.noise_clip * half, hp.noise_clip * half);
        a(i) = clamp(a(i) + noise, lim.a_min, lim.a_max);
      }
      const double q1 = policy::critic_forward(g, a, targets.critic1, lim);
      const double q2 = policy::critic_forward(g, a, targets.critic2, lim);
      expect = t.reward + hp.gamma * std::min(q1, q2);
    }
    CHECK(y[b] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("zero training steps return the initialization") {
  TrainConfig tc;
  tc.layout = geometry::LayoutKind::M;
  tc.total_steps = 0;
  tc.seed = 31;
  const TrainResult result = td3_train(tc);
  policy::PolicyWeights init = policy::init_policy(31);

  bool equal = true;
  policy::for_each_tensor(init, [&](const std::string& name, auto& t) {
    policy::PolicyWeights& rw = const_cast<policy::PolicyWeights&>(result.weights);
    policy::for_each_tensor(rw, [&](const std::string& other, auto& o) {
      if (name != other) return;
      for (int r = 0; r < t.rows(); ++r)
        for (int c = 0; c < t.cols(); ++c)
          if (t(r, c) != o(r, c)) equal = false;
    });
  });
  CHECK(equal);
}

TEST_CASE("fixed seed: identical training runs") {
  TrainConfig tc;
  tc.layout = geometry::LayoutKind::S;
  tc.total_steps = 260;
  tc.seed = 17;
  tc.hp.warmup_steps = 120;
  tc.hp.batch = 8;
  tc.eval_every_episodes = 0;
  const TrainResult a = td3_train(tc);
  const TrainResult b = td3_train(tc);

  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].episode_return == b.log[i].episode_return);
    CHECK(a.log[i].critic_loss == b.log[i].critic_loss);
  }
  bool equal = true;
  policy::PolicyWeights& wa = const_cast<policy::PolicyWeights&>(a.weights);
  policy::PolicyWeights& wb = const_cast<policy::PolicyWeights&>(b.weights);
  std::vector<std::pair<const double*, long>> va, vb;
  policy::for_each_tensor(wa, [&](const std::string&, auto& t) {
    va.emplace_back(t.data(), static_cast<long>(t.size()));
  });
  policy::for_each_tensor(wb, [&](const std::string&, auto& t) {
    vb.emplace_back(t.data(), static_cast<long>(t.size()));
  });
  for (std::size_t s = 0; s < va.size(); ++s)
    for (long k = 0; k < va[s].second; ++k)
      if (va[s].first[k] != vb[s].first[k]) equal = false;
  CHECK(equal);
}

TEST_CASE("critic loss decreases on a frozen batch with the actor frozen") {
  Rng rng(23);
  ReplayBuffer buf(64);
  for (int k = 0; k < 32; ++k) buf.push(random_transition(rng, 3, k % 8 == 7));
  policy::PolicyWeights w = policy::init_policy(29);
  const policy::PolicyWeights targets = w;
  const dynamics::MotionLimits lim;
  Hyperparams hp;

  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < 32; ++i) batch.push_back(i);
  Rng noise(41);
  const auto y = critic_target(buf, batch, targets, hp, lim, noise);

  auto batch_loss = [&] {
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Transition& t = buf.at(batch[b]);
      const policy::GraphInput g = policy::GraphInput::from(t.state);
      const double q = policy::critic_forward(g, t.actions, w.critic1, lim);
      loss += (q - y[b]) * (q - y[b]) / static_cast<double>(batch.size());
    }
    return loss;
  };

  const double initial = batch_loss();
  // Plain gradient descent steps on critic1 only.
  for (int it = 0; it < 100; ++it) {
    policy::CriticWeights grads;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Transition& t = buf.at(batch[b]);
      const policy::GraphInput g = policy::GraphInput::from(t.state);
      policy::CriticTrace tr;
      const double q = policy::critic_forward(g, t.actions, w.critic1, lim, &tr);
      policy::critic_backward(tr, w.critic1, 2.0 * (q - y[b]) / batch.size(), grads, lim);
    }
    policy::for_each_tensor(w.critic1, "", [&](const std::string& name, auto& t) {
      policy::for_each_tensor(grads, "", [&](const std::string& gname, auto& g) {
        if (name != gname) return;
        t -= 0.01 * g;
      });
    });
  }
  const double final_loss = batch_loss();
  CHECK(final_loss < initial);
  CHECK(final_loss < 0.5 * initial + 1e-9);
}
