#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "rng.hpp"

namespace admm_mpnn::graph {

// Undirected edge stored once with i < j (0-based node indices).
struct Edge {
  int i = 0;
  int j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// Communication topology. Edges are kept sorted lexicographically; adjacency
// lists are sorted ascending so neighbor sums have a fixed order.
class Graph {
 public:
  Graph() = default;
  Graph(int m, std::vector<Edge> edges);

  int num_nodes() const { return m_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<int>& neighbors(int i) const { return adj_[static_cast<std::size_t>(i)]; }
  int degree(int i) const { return static_cast<int>(neighbors(i).size()); }
  // Index into edges() of {i, j}, or -1 if absent.
  int edge_index(int i, int j) const;

  friend bool operator==(const Graph& a, const Graph& b) { return a.m_ == b.m_ && a.edges_ == b.edges_; }

 private:
  int m_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
};

// Positive weight per undirected edge, aligned with Graph::edges().
using EdgeWeights = std::vector<double>;

EdgeWeights unit_weights(const Graph& g);

// (degree, min nbr degree, max nbr degree, mean nbr degree, population variance of nbr degrees)
using LocalDegreeProfile = std::array<double, 5>;

Graph erdos_renyi(int m, double p, Rng& rng, int max_attempts = 10000);

bool is_connected(const Graph& g);

Eigen::MatrixXd weighted_laplacian(const Graph& g, const EdgeWeights& w);

LocalDegreeProfile local_degree_profile(const Graph& g, int i);

struct Permuted {
  Graph graph;
  EdgeWeights weights;
};

// Relabels node i as perm[i].
Permuted permute(const Graph& g, const EdgeWeights& w, const std::vector<int>& perm);

// {"m": int, "edges": [[i,j],...], "weights": [...]}; weights default to 1.
void to_json(nlohmann::json& j, const Graph& g, const EdgeWeights& w);
Graph graph_from_json(const nlohmann::json& j, EdgeWeights* weights = nullptr);

}  // namespace admm_mpnn::graph
