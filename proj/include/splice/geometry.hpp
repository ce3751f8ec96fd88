#pragma once

// Step 2: submanifold projection, k-NN graphs, landmark geodesics, and
// retraining with geometry-preserving losses.

#include "splice/train.hpp"

#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <thread>
#include <tuple>

namespace splice {

struct Edge {
  Index to;
  double weight;
};

struct NeighborGraph {
  Index nodes = 0;
  std::size_t k = 0;
  std::vector<std::vector<Edge>> adjacency;  // symmetric
  std::vector<std::tuple<Index, Index, double>> bridges;

  bool has_edge(Index a, Index b) const {
    for (const Edge& e : adjacency[static_cast<std::size_t>(a)])
      if (e.to == b) return true;
    return false;
  }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& a : adjacency) n += a.size();
    return n / 2;
  }
};

namespace detail {

/// Squared Euclidean distances between the rows of `a` and the rows of `b`.
/// Small problems are computed directly so exact ties stay exact.
inline Mat squared_distances(const Mat& a, const Mat& b) {
  Mat d(a.rows(), b.rows());
  const double work = static_cast<double>(a.rows()) * static_cast<double>(b.rows()) * static_cast<double>(a.cols());
  if (work <= 2e8) {
    for (Index i = 0; i < a.rows(); ++i)
      for (Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    return d;
  }
  d = -2.0 * a * b.transpose();
  d.colwise() += a.rowwise().squaredNorm();
  d.rowwise() += b.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

inline double exact_distance(const Mat& pts, Index i, Index j) { return (pts.row(i) - pts.row(j)).norm(); }

struct UnionFind {
  std::vector<Index> parent;
  explicit UnionFind(Index n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), Index{0});
  }
  Index find(Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  bool unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    return true;
  }
};

}  // namespace detail

/// Indices of the k nearest rows of `points` for every row (ties broken by
/// lower index). With include_self the point itself is the first neighbour.
inline std::vector<std::vector<Index>> knn_indices(const Mat& points, std::size_t k, bool include_self) {
  const Index n = points.rows();
  const std::size_t others = include_self ? k - 1 : k;
  if (k == 0 || static_cast<Index>(others) > n - 1) throw ConfigError("knn: need at least k+1 points");
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
  const Index block = 256;
  std::vector<std::pair<double, Index>> cand;
  for (Index r0 = 0; r0 < n; r0 += block) {
    const Index rows = std::min(block, n - r0);
    const Mat d = detail::squared_distances(points.middleRows(r0, rows), points);
    for (Index i = 0; i < rows; ++i) {
      const Index self = r0 + i;
      cand.clear();
      for (Index j = 0; j < n; ++j)
        if (j != self) cand.emplace_back(d(i, j), j);
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(others), cand.end());
      auto& nb = out[static_cast<std::size_t>(self)];
      if (include_self) nb.push_back(self);
      for (std::size_t q = 0; q < others; ++q) nb.push_back(cand[q].second);
    }
  }
  return out;
}

/// Symmetrised k-NN graph; disconnected components are joined by repeatedly
/// adding the single shortest inter-component edge, recorded as a bridge.
inline NeighborGraph knn_graph(const Mat& points, std::size_t k) {
  const Index n = points.rows();
  if (k < 1) throw ConfigError("knn_graph: k must be >= 1");
  if (n < static_cast<Index>(k) + 1) throw ConfigError("knn_graph: need at least k+1 points");
  NeighborGraph g;
  g.nodes = n;
  g.k = k;
  g.adjacency.resize(static_cast<std::size_t>(n));
  detail::UnionFind uf(n);
  auto add = [&](Index a, Index b, double w) {
    if (g.has_edge(a, b)) return;
    g.adjacency[static_cast<std::size_t>(a)].push_back({b, w});
    g.adjacency[static_cast<std::size_t>(b)].push_back({a, w});
    uf.unite(a, b);
  };
  const auto nbrs = knn_indices(points, k, false);
  for (Index i = 0; i < n; ++i)
    for (Index j : nbrs[static_cast<std::size_t>(i)]) add(i, j, detail::exact_distance(points, i, j));

  auto components = [&] {
    Index c = 0;
    for (Index i = 0; i < n; ++i)
      if (uf.find(i) == i) ++c;
    return c;
  };
  while (components() > 1) {
    double best = std::numeric_limits<double>::infinity();
    Index bi = -1, bj = -1;
    const Index block = 256;
    for (Index r0 = 0; r0 < n; r0 += block) {
      const Index rows = std::min(block, n - r0);
      const Mat d = detail::squared_distances(points.middleRows(r0, rows), points);
      for (Index i = 0; i < rows; ++i)
        for (Index j = r0 + i + 1; j < n; ++j)
          if (d(i, j) < best && uf.find(r0 + i) != uf.find(j)) {
            best = d(i, j);
            bi = r0 + i;
            bj = j;
          }
    }
    const double w = detail::exact_distance(points, bi, bj);
    g.bridges.emplace_back(bi, bj, w);
    add(bi, bj, w);
  }
  return g;
}

/// Single-source shortest path lengths (binary-heap Dijkstra).
inline std::vector<double> dijkstra(const NeighborGraph& g, Index source) {
  std::vector<double> dist(static_cast<std::size_t>(g.nodes), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, Index>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[static_cast<std::size_t>(source)] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (const Edge& e : g.adjacency[static_cast<std::size_t>(u)]) {
      const double nd = d + e.weight;
      if (nd < dist[static_cast<std::size_t>(e.to)]) {
        dist[static_cast<std::size_t>(e.to)] = nd;
        heap.emplace(nd, e.to);
      }
    }
  }
  return dist;
}

/// Exact shortest-path lengths from every landmark to every node. Landmark
/// runs are independent and spread over SPLICE_THREADS workers.
inline GeodesicTable geodesics(const NeighborGraph& g, const std::vector<Index>& landmarks,
                               LatentGroup group = LatentGroup::ZA) {
  for (Index l : landmarks)
    if (l < 0 || l >= g.nodes) throw ConfigError("geodesics: landmark index out of range");
  GeodesicTable t;
  t.group = group;
  t.landmarks = landmarks;
  t.distances.resize(static_cast<Index>(landmarks.size()), g.nodes);
  const unsigned workers = std::max(1u, std::min<unsigned>(worker_threads(), static_cast<unsigned>(landmarks.size())));
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < landmarks.size(); i += workers) {
      const auto d = dijkstra(g, landmarks[i]);
      for (Index j = 0; j < g.nodes; ++j) t.distances(static_cast<Index>(i), j) = d[static_cast<std::size_t>(j)];
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  if (!t.distances.allFinite()) throw DegenerateInputError("geodesics: graph is not connected");
  return t;
}

/// Replaces each point by the mean of its k nearest points (itself included).
inline Mat neighborhood_average(const Mat& points, std::size_t k) {
  if (k <= 1) return points;
  const auto nb = knn_indices(points, k, true);
  Mat out(points.rows(), points.cols());
  for (Index i = 0; i < points.rows(); ++i) {
    RowVec acc = RowVec::Zero(points.cols());
    for (Index j : nb[static_cast<std::size_t>(i)]) acc += points.row(j);
    out.row(i) = acc / static_cast<double>(nb[static_cast<std::size_t>(i)].size());
  }
  return out;
}

struct SubmanifoldProjection {
  Mat points;         // observation-space points of the group's submanifold
  Index fixed_index;  // datum supplying the complementary latent
};

/// Decodes with the complementary latent held at one random datum's value
/// while the target latent varies over all rows, then smooths with a
/// k_avg-neighbourhood mean. Inputs are model-space views.
inline SubmanifoldProjection project_submanifold(const SpliceModel& m, const Mat& x_A, const Mat& x_B,
                                                 LatentGroup group, std::size_t k_avg, Rng& rng) {
  if (m.group_width(group) == 0)
    throw ConfigError("project_submanifold: latent group " + std::string(group_name(group)) + " has zero width");
  const Index n = x_A.rows();
  std::uniform_int_distribution<Index> pick(0, n - 1);
  SubmanifoldProjection p;
  p.fixed_index = pick(rng);
  const Mat xa_fix = x_A.row(p.fixed_index), xb_fix = x_B.row(p.fixed_index);
  auto repeat = [&](const Mat& row) { return row.replicate(n, 1).eval(); };
  Mat decoded;
  switch (group) {
    case LatentGroup::ZA:
      decoded = m.G_A.predict(hstack(repeat(m.F_BtoA.predict(xb_fix)), m.F_A.predict(x_A)));
      break;
    case LatentGroup::ZB:
      decoded = m.G_B.predict(hstack(repeat(m.F_AtoB.predict(xa_fix)), m.F_B.predict(x_B)));
      break;
    case LatentGroup::SBtoA:
      decoded = m.G_A.predict(hstack(m.F_BtoA.predict(x_B), repeat(encode_private(m.F_A, xa_fix))));
      break;
    case LatentGroup::SAtoB:
      decoded = m.G_B.predict(hstack(m.F_AtoB.predict(x_A), repeat(encode_private(m.F_B, xb_fix))));
      break;
  }
  p.points = neighborhood_average(decoded, k_avg);
  return p;
}

struct Step2Config {
  std::size_t k_graph = 100;
  std::size_t k_avg = 100;
  std::size_t n_landmarks = 0;  // 0 = min(500, N)
  long n_epochs = 100;
  std::size_t minibatch_size = 0;
  int n_msr_inner = 5;
  int n_msr_restart = 1000;
  long T_restart = 1000;
  double disentangle_weight = 1.0;
  double base_lr = 1e-3;
  double final_lr = 1e-5;
  std::map<LatentGroup, double> geo_weight{{LatentGroup::ZA, 1.0},
                                           {LatentGroup::ZB, 1.0},
                                           {LatentGroup::SAtoB, 1.0},
                                           {LatentGroup::SBtoA, 1.0}};
  std::uint64_t seed = 0;
  long log_every = 0;
  std::function<void(const std::string&)> log;

  void validate() const {
    if (k_graph < 1 || k_avg < 1) throw ConfigError("step2: k_graph and k_avg must be >= 1");
    if (n_landmarks == 1) throw ConfigError("step2: n_landmarks must be >= 2");
    for (const auto& [g, w] : geo_weight)
      if (w < 0) throw ConfigError("step2: geo weights must be >= 0");
  }

  Step1Config as_step1(StandardizeMode mode) const {
    Step1Config c;
    c.n_epochs = n_epochs;
    c.minibatch_size = minibatch_size;
    c.n_msr_inner = n_msr_inner;
    c.n_msr_restart = n_msr_restart;
    c.T_restart = T_restart;
    c.disentangle_weight = disentangle_weight;
    c.base_lr = base_lr;
    c.final_lr = final_lr;
    c.seed = seed;
    c.standardize = mode;
    c.log_every = log_every;
    c.log = log;
    return c;
  }
};

struct GeometryBuild {
  std::vector<GeodesicTable> tables;
  std::map<LatentGroup, Index> fixed_index;
  std::map<LatentGroup, std::size_t> bridges;
};

/// Projects each non-empty latent group's submanifold over the training rows
/// and computes its landmark geodesic table. One landmark set is shared by all groups.
inline GeometryBuild build_geodesic_tables(const SpliceModel& m, const PairedDataset& data, const Step2Config& cfg) {
  cfg.validate();
  const auto [xa, xb] = model_space(m, data, Split::Train);
  const Index n = xa.rows();
  const std::size_t n_land = cfg.n_landmarks == 0 ? static_cast<std::size_t>(std::min<Index>(500, n))
                                                  : std::min<std::size_t>(cfg.n_landmarks, static_cast<std::size_t>(n));
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  Rng land_rng(derive_seed(cfg.seed, 21));
  std::shuffle(all.begin(), all.end(), land_rng);
  std::vector<Index> landmarks(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_land));
  std::sort(landmarks.begin(), landmarks.end());

  GeometryBuild out;
  Rng fix_rng(derive_seed(cfg.seed, 22));
  for (LatentGroup g : kAllGroups) {
    if (m.group_width(g) == 0) continue;
    const auto proj = project_submanifold(m, xa, xb, g, cfg.k_avg, fix_rng);
    const auto graph = knn_graph(proj.points, std::min<std::size_t>(cfg.k_graph, static_cast<std::size_t>(n - 1)));
    out.fixed_index[g] = proj.fixed_index;
    out.bridges[g] = graph.bridges.size();
    out.tables.push_back(geodesics(graph, landmarks, g));
  }
  return out;
}

/// Continues the alternating training with weighted geometry-preserving
/// terms added to the encoder/decoder objective. Geodesics stay fixed.
inline LossTrace step2_train(SpliceModel& model, const PairedDataset& data, const std::vector<GeodesicTable>& tables,
                             const Step2Config& cfg) {
  cfg.validate();
  data.validate();
  if (model.standardizer.empty()) throw StateError("step2: model has no standardisation statistics");
  const auto [xa, xb] = model_space(model, data, Split::Train);
  std::map<LatentGroup, GeoTerm> geo;
  for (const auto& t : tables) {
    if (model.group_width(t.group) == 0) continue;
    auto it = cfg.geo_weight.find(t.group);
    const double w = it == cfg.geo_weight.end() ? 1.0 : it->second;
    if (w > 0) geo[t.group] = GeoTerm{&t, w};
  }
  const Step1Config c1 = cfg.as_step1(StandardizeMode::None);
  return detail::AlternatingTrainer(model, xa, xb, c1, std::move(geo), "step2").run();
}

}  // namespace splice
