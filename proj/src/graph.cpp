#include "graph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "errors.hpp"

namespace admm_mpnn::graph {

Graph::Graph(int m, std::vector<Edge> edges) : m_(m), edges_(std::move(edges)) {
  ADMM_MPNN_REQUIRE(m >= 1, "graph needs at least one node");
  for (auto& e : edges_) {
    ADMM_MPNN_REQUIRE(e.i != e.j, "self-loops are not allowed");
    ADMM_MPNN_REQUIRE(e.i >= 0 && e.j >= 0 && e.i < m && e.j < m, "edge endpoint out of range");
    if (e.i > e.j) std::swap(e.i, e.j);
  }
  std::sort(edges_.begin(), edges_.end(),
            [](const Edge& a, const Edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  ADMM_MPNN_REQUIRE(std::adjacent_find(edges_.begin(), edges_.end()) == edges_.end(),
                    "duplicate edge");
  adj_.assign(static_cast<std::size_t>(m), {});
  for (const auto& e : edges_) {
    adj_[static_cast<std::size_t>(e.i)].push_back(e.j);
    adj_[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  for (auto& a : adj_) std::sort(a.begin(), a.end());
}

int Graph::edge_index(int i, int j) const {
  if (i > j) std::swap(i, j);
  const Edge key{i, j};
  auto it = std::lower_bound(edges_.begin(), edges_.end(), key, [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  if (it == edges_.end() || !(*it == key)) return -1;
  return static_cast<int>(it - edges_.begin());
}

EdgeWeights unit_weights(const Graph& g) { return EdgeWeights(g.num_edges(), 1.0); }

Graph erdos_renyi(int m, double p, Rng& rng, int max_attempts) {
  if (m < 2) throw ConfigError("erdos_renyi: need m >= 2");
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("erdos_renyi: edge probability must be in (0, 1]");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<Edge> edges;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (unif(rng) < p) edges.push_back({i, j});
    Graph g(m, std::move(edges));
    if (is_connected(g)) return g;
  }
  throw NumericError("erdos_renyi: no connected graph after " + std::to_string(max_attempts) +
                     " attempts (m=" + std::to_string(m) + ", p=" + std::to_string(p) + ")");
}

bool is_connected(const Graph& g) {
  const int m = g.num_nodes();
  if (m <= 1) return true;
  std::vector<char> seen(static_cast<std::size_t>(m), 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : g.neighbors(u)) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == m;
}

Eigen::MatrixXd weighted_laplacian(const Graph& g, const EdgeWeights& w) {
  ADMM_MPNN_REQUIRE(w.size() == g.num_edges(), "weighted_laplacian: one weight per edge required");
  const int m = g.num_nodes();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t k = 0; k < w.size(); ++k) {
    ADMM_MPNN_REQUIRE(w[k] > 0.0 && std::isfinite(w[k]), "weighted_laplacian: edge weights must be positive");
    const auto [i, j] = g.edges()[k];
    P(i, j) -= w[k];
    P(j, i) -= w[k];
    P(i, i) += w[k];
    P(j, j) += w[k];
  }
  return P;
}

LocalDegreeProfile local_degree_profile(const Graph& g, int i) {
  ADMM_MPNN_REQUIRE(i >= 0 && i < g.num_nodes(), "local_degree_profile: node out of range");
  const auto& nbrs = g.neighbors(i);
  LocalDegreeProfile ldp{static_cast<double>(nbrs.size()), 0.0, 0.0, 0.0, 0.0};
  if (nbrs.empty()) return ldp;
  double lo = 1e300, hi = -1e300, sum = 0.0;
  for (int j : nbrs) {
    const double d = g.degree(j);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    sum += d;
  }
  const double mean = sum / static_cast<double>(nbrs.size());
  double var = 0.0;
  for (int j : nbrs) {
    const double dev = g.degree(j) - mean;
    var += dev * dev;
  }
  ldp[1] = lo;
  ldp[2] = hi;
  ldp[3] = mean;
  ldp[4] = var / static_cast<double>(nbrs.size());
  return ldp;
}

Permuted permute(const Graph& g, const EdgeWeights& w, const std::vector<int>& perm) {
  const int m = g.num_nodes();
  ADMM_MPNN_REQUIRE(static_cast<int>(perm.size()) == m, "permute: permutation size mismatch");
  ADMM_MPNN_REQUIRE(w.size() == g.num_edges(), "permute: one weight per edge required");
  std::vector<char> hit(static_cast<std::size_t>(m), 0);
  for (int p : perm) {
    ADMM_MPNN_REQUIRE(p >= 0 && p < m && !hit[static_cast<std::size_t>(p)], "permute: not a bijection");
    hit[static_cast<std::size_t>(p)] = 1;
  }
  std::vector<Edge> edges;
  edges.reserve(g.num_edges());
  for (const auto& e : g.edges())
    edges.push_back({perm[static_cast<std::size_t>(e.i)], perm[static_cast<std::size_t>(e.j)]});
  Graph out(m, std::move(edges));
  EdgeWeights ow(w.size());
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const auto& e = g.edges()[k];
    ow[static_cast<std::size_t>(
        out.edge_index(perm[static_cast<std::size_t>(e.i)], perm[static_cast<std::size_t>(e.j)]))] = w[k];
  }
  return {std::move(out), std::move(ow)};
}

void to_json(nlohmann::json& j, const Graph& g, const EdgeWeights& w) {
  ADMM_MPNN_REQUIRE(w.size() == g.num_edges(), "graph to_json: one weight per edge required");
  auto edges = nlohmann::json::array();
  for (const auto& e : g.edges()) edges.push_back({e.i, e.j});
  j = {{"m", g.num_nodes()}, {"edges", std::move(edges)}, {"weights", w}};
}

Graph graph_from_json(const nlohmann::json& j, EdgeWeights* weights) {
  try {
    const int m = j.at("m").get<int>();
    std::vector<Edge> raw;
    for (const auto& e : j.at("edges")) raw.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    EdgeWeights w = j.contains("weights") ? j.at("weights").get<EdgeWeights>()
                                          : EdgeWeights(raw.size(), 1.0);
    if (w.size() != raw.size()) throw IoError("graph json: weights not aligned with edges");
    Graph g(m, raw);
    if (weights) {
      weights->assign(g.num_edges(), 0.0);
      for (std::size_t k = 0; k < raw.size(); ++k)
        (*weights)[static_cast<std::size_t>(g.edge_index(raw[k].i, raw[k].j))] = w[k];
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("graph json: ") + e.what());
  } catch (const ContractError& e) {
    throw IoError(std::string("graph json: ") + e.what());
  }
}

}  // namespace admm_mpnn::graph
