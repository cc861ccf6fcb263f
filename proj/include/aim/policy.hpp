#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aim/dynamics.hpp"
#include "aim/scenegraph.hpp"

namespace aim::policy {

constexpr int kVertexFeatures = 3;
constexpr int kEdgeFeatures = 2;
constexpr int kVertexHidden = 64;
constexpr int kEdgeHidden = 32;
constexpr int kRelations = 2;  // same_lane, crossing

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Net-facing view of a normalized scene graph: feature matrices plus incoming
// edge lists per (vertex, relation), sorted by source index so max-aggregation
// tie-breaking is deterministic.
struct GraphInput {
  Matrix h;  // kVertexFeatures x N
  Matrix e;  // kEdgeFeatures x E
  std::vector<int> src, dst, type;
  std::vector<std::array<std::vector<int>, kRelations>> incoming;

  int n() const { return static_cast<int>(h.cols()); }
  int edges() const { return static_cast<int>(src.size()); }

  static GraphInput from(const scenegraph::SceneGraph& graph);
};

struct Dense {
  Matrix W;
  Vector b;

  Dense() = default;
  Dense(int out, int in) : W(Matrix::Zero(out, in)), b(Vector::Zero(out)) {}
};

// Per-relation weight matrices plus the self matrix; no bias (Eq.-style
// relational update).
struct Relational {
  std::array<Matrix, kRelations> Wr;
  Matrix W0;

  Relational() = default;
  Relational(int out, int in_msg, int in_self) : W0(Matrix::Zero(out, in_self)) {
    for (Matrix& w : Wr) w = Matrix::Zero(out, in_msg);
  }
};

struct ActorWeights {
  Dense v_enc{kVertexHidden, kVertexFeatures};
  Dense e_enc{kEdgeHidden, kEdgeFeatures};
  Relational conv1{kVertexHidden, kVertexHidden + kEdgeHidden, kVertexHidden};
  Relational conv2{kVertexHidden, kVertexHidden, kVertexHidden};
  Dense dec{1, kVertexHidden};
};

struct CriticWeights {
  Dense v_enc{kVertexHidden, kVertexFeatures + 1};  // vertex features + action
  Dense e_enc{kEdgeHidden, kEdgeFeatures};
  Relational conv1{kVertexHidden, kVertexHidden + kEdgeHidden, kVertexHidden};
  Relational conv2{kVertexHidden, kVertexHidden, kVertexHidden};
  Dense head{1, kVertexHidden};
};

struct PolicyWeights {
  ActorWeights actor;
  CriticWeights critic1;
  CriticWeights critic2;
};

// Visits every tensor with a stable name ("actor.conv1.W_cross", ...). Biases
// visit as n x 1 Eigen vectors.
template <class F>
void for_each_tensor(Dense& d, const std::string& p, F&& f) {
  f(p + ".W", d.W);
  f(p + ".b", d.b);
}
template <class F>
void for_each_tensor(Relational& r, const std::string& p, F&& f) {
  f(p + ".W_same", r.Wr[0]);
  f(p + ".W_cross", r.Wr[1]);
  f(p + ".W_self", r.W0);
}
template <class F>
void for_each_tensor(ActorWeights& w, const std::string& p, F&& f) {
  for_each_tensor(w.v_enc, p + ".v_enc", f);
  for_each_tensor(w.e_enc, p + ".e_enc", f);
  for_each_tensor(w.conv1, p + ".conv1", f);
  for_each_tensor(w.conv2, p + ".conv2", f);
  for_each_tensor(w.dec, p + ".dec", f);
}
template <class F>
void for_each_tensor(CriticWeights& w, const std::string& p, F&& f) {
  for_each_tensor(w.v_enc, p + ".v_enc", f);
  for_each_tensor(w.e_enc, p + ".e_enc", f);
  for_each_tensor(w.conv1, p + ".conv1", f);
  for_each_tensor(w.conv2, p + ".conv2", f);
  for_each_tensor(w.head, p + ".head", f);
}
template <class F>
void for_each_tensor(PolicyWeights& w, F&& f) {
  for_each_tensor(w.actor, "actor", f);
  for_each_tensor(w.critic1, "critic1", f);
  for_each_tensor(w.critic2, "critic2", f);
}

void glorot_init(ActorWeights& w, Rng& rng);
void glorot_init(CriticWeights& w, Rng& rng);
PolicyWeights init_policy(std::uint64_t seed);

// Relational layer with edge features concatenated into the message
// (h_i' = ReLU(sum_r max_j W_r [h_j, e_ji] + W_0 h_i)); empty neighbor sets
// contribute zero.
Matrix edge_rgcn_forward(const Matrix& h, const Matrix& e, const GraphInput& g,
                         const Relational& w);
// Plain relational layer (messages W_r h_j).
Matrix rgcn_forward(const Matrix& h, const GraphInput& g, const Relational& w);

struct RelationalTrace {
  Matrix x;    // per-edge message input (concat for conv1, h_src for conv2)
  Matrix msg;  // out x E, pre-aggregation
  Matrix z;    // out x N, pre-ReLU
  std::vector<std::array<std::vector<int>, kRelations>> winners;
};

struct ActorTrace {
  const GraphInput* g = nullptr;
  Matrix zv, hv;  // v_enc pre/post activation
  Matrix ze, he;  // e_enc
  RelationalTrace t1;
  Matrix h1;
  RelationalTrace t2;
  Matrix h2;
  Vector zdec;     // pre-tanh
  Vector actions;  // decoded
  double half_range = 0.0;  // tanh output scale
};

struct CriticTrace {
  const GraphInput* g = nullptr;
  Matrix x;  // (kVertexFeatures+1) x N, action row normalized
  Matrix zv, hv;
  Matrix ze, he;
  RelationalTrace t1;
  Matrix h1;
  RelationalTrace t2;
  Matrix h2;
  Vector q;  // per-vertex head outputs
};

// Per-vertex accelerations in (a_min, a_max) via scaled tanh. Empty graph
// yields an empty vector.
Vector actor_forward(const GraphInput& g, const ActorWeights& w,
                     const dynamics::MotionLimits& limits, ActorTrace* trace = nullptr);

// Accumulates dL/dweights into `grads` given dL/dactions.
void actor_backward(const ActorTrace& trace, const ActorWeights& w, const Vector& d_actions,
                    ActorWeights& grads);

// Joint Q: action appended to each vertex's features, per-vertex heads
// averaged. Empty graph yields 0.
double critic_forward(const GraphInput& g, const Vector& actions, const CriticWeights& w,
                      const dynamics::MotionLimits& limits, CriticTrace* trace = nullptr);

// Accumulates gradients; optionally returns dQ/dactions (raw action units).
void critic_backward(const CriticTrace& trace, const CriticWeights& w, double d_q,
                     CriticWeights& grads, const dynamics::MotionLimits& limits,
                     Vector* d_actions = nullptr);

// Versioned binary tensor container with checksum; bit-exact round trip.
void save_weights(const PolicyWeights& w, const std::string& path);
PolicyWeights load_weights(const std::string& path);

}  // namespace aim::policy
