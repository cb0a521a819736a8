#pragma once

#include <Eigen/Dense>
#include <vector>

#include "admm.hpp"
#include "graph.hpp"
#include "problems.hpp"
#include "rng.hpp"

namespace test {

using namespace admm_mpnn;

inline graph::Graph path3() { return graph::Graph(3, {{0, 1}, {1, 2}}); }

// Consensus instance on an arbitrary graph; x* and the baseline are filled in.
inline problems::ProblemInstance consensus_on(const graph::Graph& g, const Eigen::MatrixXd& b, int K = 10) {
  problems::ProblemInstance inst;
  inst.graph = g;
  inst.cls = problems::ProblemClass::consensus;
  inst.n = static_cast<int>(b.cols());
  inst.b = b;
  inst.x_star = problems::global_solution(inst);
  problems::recompute_baseline(inst, K);
  return inst;
}

inline std::vector<int> random_perm(int m, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) p[static_cast<std::size_t>(i)] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

inline Eigen::MatrixXd permute_rows(const Eigen::MatrixXd& X, const std::vector<int>& perm) {
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(perm[static_cast<std::size_t>(i)]) = X.row(i);
  return out;
}

inline Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> N(0.0, sd);
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = N(rng);
  return M;
}

inline graph::EdgeWeights random_weights(const graph::Graph& g, Rng& rng, double lo = 0.3, double hi = 2.0) {
  std::uniform_real_distribution<double> U(lo, hi);
  graph::EdgeWeights w(g.num_edges());
  for (auto& e : w) e = U(rng);
  return w;
}

}  // namespace test
