#include "aim/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace aim::policy {

GraphInput GraphInput::from(const scenegraph::SceneGraph& graph) {
  GraphInput g;
  const int n = static_cast<int>(graph.vertices.size());
  const int m = static_cast<int>(graph.edges.size());
  g.h.resize(kVertexFeatures, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < kVertexFeatures; ++k)
      g.h(k, i) = graph.vertices[static_cast<std::size_t>(i)].h[static_cast<std::size_t>(k)];
  g.e.resize(kEdgeFeatures, m);
  g.src.resize(static_cast<std::size_t>(m));
  g.dst.resize(static_cast<std::size_t>(m));
  g.type.resize(static_cast<std::size_t>(m));
  g.incoming.assign(static_cast<std::size_t>(n), {});
  for (int eid = 0; eid < m; ++eid) {
    const scenegraph::GraphEdge& e = graph.edges[static_cast<std::size_t>(eid)];
    g.e(0, eid) = e.g[0];
    g.e(1, eid) = e.g[1];
    g.src[static_cast<std::size_t>(eid)] = e.src;
    g.dst[static_cast<std::size_t>(eid)] = e.dst;
    g.type[static_cast<std::size_t>(eid)] = static_cast<int>(e.type);
    g.incoming[static_cast<std::size_t>(e.dst)][static_cast<std::size_t>(e.type)].push_back(eid);
  }
  for (auto& per_vertex : g.incoming)
    for (auto& list : per_vertex)
      std::sort(list.begin(), list.end(),
                [&](int a, int b) { return g.src[static_cast<std::size_t>(a)] <
                                           g.src[static_cast<std::size_t>(b)]; });
  return g;
}

namespace {

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

// Shared relational core; with_edge_features selects the message input.
Matrix relational_forward(const Matrix& h, const Matrix* e, const GraphInput& g,
                          const Relational& w, RelationalTrace* trace) {
  const int n = static_cast<int>(h.cols());
  const int m = g.edges();
  const int out = static_cast<int>(w.W0.rows());
  const int in_msg = static_cast<int>(w.Wr[0].cols());

  Matrix x(in_msg, m);
  for (int eid = 0; eid < m; ++eid) {
    const int s = g.src[static_cast<std::size_t>(eid)];
    if (e != nullptr) {
      x.col(eid).head(h.rows()) = h.col(s);
      x.col(eid).tail(e->rows()) = e->col(eid);
    } else {
      x.col(eid) = h.col(s);
    }
  }
  Matrix msg(out, m);
  for (int eid = 0; eid < m; ++eid)
    msg.col(eid).noalias() = w.Wr[static_cast<std::size_t>(g.type[static_cast<std::size_t>(eid)])] *
                             x.col(eid);

  Matrix z = w.W0 * h;
  std::vector<std::array<std::vector<int>, kRelations>> winners(
      static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < kRelations; ++r) {
      const auto& in_edges = g.incoming[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)];
      auto& win = winners[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)];
      if (in_edges.empty()) continue;  // empty neighbor set contributes zero
      win.assign(static_cast<std::size_t>(out), -1);
      Vector best = Vector::Constant(out, -kInf);
      for (int eid : in_edges) {
        for (int k = 0; k < out; ++k) {
          if (msg(k, eid) > best(k)) {  // ties keep the lowest source index
            best(k) = msg(k, eid);
            win[static_cast<std::size_t>(k)] = eid;
          }
        }
      }
      z.col(i) += best;
    }
  }
  if (trace != nullptr) {
    trace->x = std::move(x);
    trace->msg = std::move(msg);
    trace->z = z;
    trace->winners = std::move(winners);
  }
  return relu(z);
}

// Backward through the relational core. d_h accumulates the gradient w.r.t.
// the layer's vertex input; d_e (optional) w.r.t. the edge features.
void relational_backward(const RelationalTrace& trace, const GraphInput& g, const Relational& w,
                         const Matrix& h_in, const Matrix& d_out, Relational& grads, Matrix& d_h,
                         Matrix* d_e) {
  const int n = static_cast<int>(h_in.cols());
  const int m = g.edges();
  const int out = static_cast<int>(w.W0.rows());

  const Matrix d_z = d_out.cwiseProduct((trace.z.array() > 0.0).cast<double>().matrix());
  grads.W0.noalias() += d_z * h_in.transpose();
  d_h.noalias() += w.W0.transpose() * d_z;

  Matrix d_msg = Matrix::Zero(out, m);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < kRelations; ++r) {
      const auto& win = trace.winners[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)];
      if (win.empty()) continue;
      for (int k = 0; k < out; ++k) {
        const int eid = win[static_cast<std::size_t>(k)];
        if (eid >= 0) d_msg(k, eid) += d_z(k, i);
      }
    }
  }
  const int h_rows = static_cast<int>(h_in.rows());
  for (int eid = 0; eid < m; ++eid) {
    if (d_msg.col(eid).isZero(0.0)) continue;
    const std::size_t r = static_cast<std::size_t>(g.type[static_cast<std::size_t>(eid)]);
    grads.Wr[r].noalias() += d_msg.col(eid) * trace.x.col(eid).transpose();
    const Vector d_x = w.Wr[r].transpose() * d_msg.col(eid);
    const int s = g.src[static_cast<std::size_t>(eid)];
    d_h.col(s) += d_x.head(h_rows);
    if (d_e != nullptr) d_e->col(eid) += d_x.tail(d_e->rows());
  }
}

}  // namespace

Matrix edge_rgcn_forward(const Matrix& h, const Matrix& e, const GraphInput& g,
                         const Relational& w) {
  return relational_forward(h, &e, g, w, nullptr);
}

Matrix rgcn_forward(const Matrix& h, const GraphInput& g, const Relational& w) {
  return relational_forward(h, nullptr, g, w, nullptr);
}

namespace {

void glorot(Matrix& w, Rng& rng) {
  const double lim = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (int c = 0; c < w.cols(); ++c)
    for (int r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-lim, lim);
}

}  // namespace

void glorot_init(ActorWeights& w, Rng& rng) {
  for_each_tensor(w, "", [&](const std::string& name, auto& t) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) return;
    Matrix m = t;
    glorot(m, rng);
    t = m;
  });
}

void glorot_init(CriticWeights& w, Rng& rng) {
  for_each_tensor(w, "", [&](const std::string& name, auto& t) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) return;
    Matrix m = t;
    glorot(m, rng);
    t = m;
  });
}

PolicyWeights init_policy(std::uint64_t seed) {
  PolicyWeights w;
  Rng ra(Rng::mix(seed, 1));
  glorot_init(w.actor, ra);
  Rng rc1(Rng::mix(seed, 2));
  glorot_init(w.critic1, rc1);
  Rng rc2(Rng::mix(seed, 3));
  glorot_init(w.critic2, rc2);
  return w;
}

Vector actor_forward(const GraphInput& g, const ActorWeights& w,
                     const dynamics::MotionLimits& limits, ActorTrace* trace) {
  const int n = g.n();
  if (n == 0) return Vector(0);
  ActorTrace local;
  ActorTrace& t = trace != nullptr ? *trace : local;
  t.g = &g;

  t.zv = (w.v_enc.W * g.h).colwise() + w.v_enc.b;
  t.hv = relu(t.zv);
  t.ze = (w.e_enc.W * g.e).colwise() + w.e_enc.b;
  t.he = relu(t.ze);
  t.h1 = relational_forward(t.hv, &t.he, g, w.conv1, &t.t1);
  t.h2 = relational_forward(t.h1, nullptr, g, w.conv2, &t.t2);
  t.zdec = ((w.dec.W * t.h2).colwise() + w.dec.b).transpose();

  const double mid = 0.5 * (limits.a_min + limits.a_max);
  const double half = 0.5 * (limits.a_max - limits.a_min);
  t.half_range = half;
  t.actions = t.zdec.array().tanh() * half + mid;
  return t.actions;
}

void actor_backward(const ActorTrace& t, const ActorWeights& w, const Vector& d_actions,
                    ActorWeights& grads) {
  const GraphInput& g = *t.g;
  const int n = g.n();
  if (n == 0) return;

  // a = mid + half*tanh(z): da/dz = half * (1 - tanh^2).
  Vector d_zdec(n);
  for (int i = 0; i < n; ++i) {
    const double th = std::tanh(t.zdec(i));
    d_zdec(i) = d_actions(i) * t.half_range * (1.0 - th * th);
  }

  Matrix d_h2 = w.dec.W.transpose() * d_zdec.transpose();
  grads.dec.W.noalias() += d_zdec.transpose() * t.h2.transpose();
  grads.dec.b(0) += d_zdec.sum();

  Matrix d_h1 = Matrix::Zero(kVertexHidden, n);
  relational_backward(t.t2, g, w.conv2, t.h1, d_h2, grads.conv2, d_h1, nullptr);

  Matrix d_hv = Matrix::Zero(kVertexHidden, n);
  Matrix d_he = Matrix::Zero(kEdgeHidden, g.edges());
  relational_backward(t.t1, g, w.conv1, t.hv, d_h1, grads.conv1, d_hv, &d_he);

  const Matrix d_zv = d_hv.cwiseProduct((t.zv.array() > 0.0).cast<double>().matrix());
  grads.v_enc.W.noalias() += d_zv * g.h.transpose();
  grads.v_enc.b += d_zv.rowwise().sum();
  const Matrix d_ze = d_he.cwiseProduct((t.ze.array() > 0.0).cast<double>().matrix());
  grads.e_enc.W.noalias() += d_ze * g.e.transpose();
  grads.e_enc.b += d_ze.rowwise().sum();
}

double critic_forward(const GraphInput& g, const Vector& actions, const CriticWeights& w,
                      const dynamics::MotionLimits& limits, CriticTrace* trace) {
  const int n = g.n();
  if (n == 0) return 0.0;
  CriticTrace local;
  CriticTrace& t = trace != nullptr ? *trace : local;
  t.g = &g;

  const double mid = 0.5 * (limits.a_min + limits.a_max);
  const double half = 0.5 * (limits.a_max - limits.a_min);
  t.x.resize(kVertexFeatures + 1, n);
  t.x.topRows(kVertexFeatures) = g.h;
  for (int i = 0; i < n; ++i) t.x(kVertexFeatures, i) = (actions(i) - mid) / half;

  t.zv = (w.v_enc.W * t.x).colwise() + w.v_enc.b;
  t.hv = relu(t.zv);
  t.ze = (w.e_enc.W * g.e).colwise() + w.e_enc.b;
  t.he = relu(t.ze);
  t.h1 = relational_forward(t.hv, &t.he, g, w.conv1, &t.t1);
  t.h2 = relational_forward(t.h1, nullptr, g, w.conv2, &t.t2);
  t.q = ((w.head.W * t.h2).colwise() + w.head.b).transpose();
  return t.q.mean();
}

void critic_backward(const CriticTrace& t, const CriticWeights& w, double d_q,
                     CriticWeights& grads, const dynamics::MotionLimits& limits,
                     Vector* d_actions) {
  const GraphInput& g = *t.g;
  const int n = g.n();
  if (n == 0) return;

  const Vector d_per_vertex = Vector::Constant(n, d_q / n);
  grads.head.W.noalias() += d_per_vertex.transpose() * t.h2.transpose();
  grads.head.b(0) += d_per_vertex.sum();
  Matrix d_h2 = w.head.W.transpose() * d_per_vertex.transpose();

  Matrix d_h1 = Matrix::Zero(kVertexHidden, n);
  relational_backward(t.t2, g, w.conv2, t.h1, d_h2, grads.conv2, d_h1, nullptr);

  Matrix d_hv = Matrix::Zero(kVertexHidden, n);
  Matrix d_he = Matrix::Zero(kEdgeHidden, g.edges());
  relational_backward(t.t1, g, w.conv1, t.hv, d_h1, grads.conv1, d_hv, &d_he);

  const Matrix d_zv = d_hv.cwiseProduct((t.zv.array() > 0.0).cast<double>().matrix());
  grads.v_enc.W.noalias() += d_zv * t.x.transpose();
  grads.v_enc.b += d_zv.rowwise().sum();
  const Matrix d_ze = d_he.cwiseProduct((t.ze.array() > 0.0).cast<double>().matrix());
  grads.e_enc.W.noalias() += d_ze * g.e.transpose();
  grads.e_enc.b += d_ze.rowwise().sum();

  if (d_actions != nullptr) {
    const double half = 0.5 * (limits.a_max - limits.a_min);
    const Matrix d_x = w.v_enc.W.transpose() * d_zv;
    d_actions->resize(n);
    for (int i = 0; i < n; ++i) (*d_actions)(i) = d_x(kVertexFeatures, i) / half;
  }
}

namespace {

constexpr char kMagic[8] = {'A', 'I', 'M', 'W', 'G', 'T', '0', '1'};
constexpr std::uint32_t kWeightsVersion = 1;

struct Fnv1a {
  std::uint64_t state = 1469598103934665603ULL;
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state ^= p[i];
      state *= 1099511628211ULL;
    }
  }
};

void write_bytes(std::ofstream& out, Fnv1a& sum, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  sum.update(data, n);
}

template <class T>
void write_pod(std::ofstream& out, Fnv1a& sum, T value) {
  write_bytes(out, sum, &value, sizeof(T));
}

void read_bytes(std::ifstream& in, Fnv1a& sum, void* data, std::size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("weights: truncated file");
  sum.update(data, n);
}

template <class T>
T read_pod(std::ifstream& in, Fnv1a& sum) {
  T value;
  read_bytes(in, sum, &value, sizeof(T));
  return value;
}

}  // namespace

void save_weights(const PolicyWeights& weights, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("weights: cannot write " + path);
  Fnv1a sum;
  write_bytes(out, sum, kMagic, sizeof(kMagic));
  write_pod(out, sum, kWeightsVersion);

  std::uint32_t count = 0;
  PolicyWeights& mutable_w = const_cast<PolicyWeights&>(weights);
  for_each_tensor(mutable_w, [&](const std::string&, auto&) { ++count; });
  write_pod(out, sum, count);

  for_each_tensor(mutable_w, [&](const std::string& name, auto& t) {
    const auto len = static_cast<std::uint32_t>(name.size());
    write_pod(out, sum, len);
    write_bytes(out, sum, name.data(), name.size());
    write_pod(out, sum, static_cast<std::uint32_t>(t.rows()));
    write_pod(out, sum, static_cast<std::uint32_t>(t.cols()));
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < t.cols(); ++c) write_pod(out, sum, static_cast<double>(t(r, c)));
  });
  const std::uint64_t checksum = sum.state;
  out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  if (!out) throw std::runtime_error("weights: write failed for " + path);
}

PolicyWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("weights: cannot read " + path);
  Fnv1a sum;
  char magic[8];
  read_bytes(in, sum, magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("weights: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(in, sum);
  if (version != kWeightsVersion) throw std::runtime_error("weights: unsupported version");
  const auto count = read_pod<std::uint32_t>(in, sum);

  PolicyWeights w;
  std::map<std::string, Matrix> table;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = read_pod<std::uint32_t>(in, sum);
    std::string name(len, '\0');
    read_bytes(in, sum, name.data(), len);
    const auto rows = read_pod<std::uint32_t>(in, sum);
    const auto cols = read_pod<std::uint32_t>(in, sum);
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = read_pod<double>(in, sum);
    table.emplace(std::move(name), std::move(m));
  }
  const std::uint64_t expected = sum.state;
  std::uint64_t stored = 0;
  in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
  if (!in || stored != expected) throw std::runtime_error("weights: checksum mismatch");

  for_each_tensor(w, [&](const std::string& name, auto& t) {
    const auto it = table.find(name);
    if (it == table.end()) throw std::runtime_error("weights: missing tensor " + name);
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols())
      throw std::runtime_error("weights: shape mismatch for " + name);
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < t.cols(); ++c) t(r, c) = it->second(r, c);
    table.erase(it);
  });
  if (!table.empty()) throw std::runtime_error("weights: unexpected extra tensors");
  return w;
}

}  // namespace aim::policy
