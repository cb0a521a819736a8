#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "graph.hpp"
#include "problems.hpp"

namespace admm_mpnn::admm {

// Per-node ADMM iterates; row i of each matrix belongs to node i.
struct IterState {
  int k = 0;
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  Eigen::MatrixXd lambda;
};

// Weighted Laplacian P together with the per-node scalars the x-update needs.
struct CommMatrix {
  graph::Graph graph;
  graph::EdgeWeights weights;
  Eigen::MatrixXd P;
  Eigen::VectorXd P_diag;  // weighted degree
  Eigen::VectorXd M_diag;  // sum_j e_ji^2 + (sum_j e_ji)^2
  std::vector<int> degree; // unweighted

  static CommMatrix build(const graph::Graph& g, const graph::EdgeWeights& w);
  static CommMatrix unit(const graph::Graph& g) { return build(g, graph::unit_weights(g)); }
  int num_nodes() const { return graph.num_nodes(); }
};

// Block-1 aggregates: lambda_in(i) = sum_{j in N(i)} P_ji lambda_j, y_in likewise.
struct Aggregates {
  Eigen::MatrixXd lambda_in;
  Eigen::MatrixXd y_in;
};

Aggregates aggregate_block1(const IterState& s, const CommMatrix& comm);
// x_in(i) = sum_{j in N(i)} P_ij x_j.
Eigen::MatrixXd aggregate_block2(const Eigen::MatrixXd& x, const CommMatrix& comm);

// Step sizes per iteration and node. Iterations are numbered from 1; for
// k > horizon every node uses alpha_fixed.
class StepSchedule {
 public:
  using Predictor = std::function<Eigen::VectorXd(int k, const IterState&, const CommMatrix&)>;

  static StepSchedule constant(double alpha);
  StepSchedule(Predictor predictor, int horizon, double alpha_fixed = 1.0);

  Eigen::VectorXd alphas(int k, const IterState& s, const CommMatrix& comm) const;
  int horizon() const { return horizon_; }
  double alpha_fixed() const { return alpha_fixed_; }

 private:
  Predictor predictor_;
  int horizon_ = 0;
  double alpha_fixed_ = 1.0;
};

enum class XSolver { closed_form, conjugate_gradient };

// x^0 defaults to zero; y^0 follows from x^0, lambda^0 = 0.
IterState init_state(const problems::ProblemInstance& inst, const CommMatrix& comm,
                     const Eigen::MatrixXd* x0 = nullptr);

// Minimizer of the rewritten local subproblem for one node, given block-1 aggregates.
Eigen::VectorXd x_update_node(const problems::ProblemInstance& inst, const IterState& s,
                              const CommMatrix& comm, const Aggregates& agg, int i, double alpha,
                              XSolver solver = XSolver::closed_form);

// Conjugate gradients for a small SPD system.
Eigen::VectorXd conjugate_gradient(const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs,
                                   double tol = 1e-12, int max_iter = -1);

// One iteration reading neighbor iterates directly.
IterState iterate_direct(const problems::ProblemInstance& inst, const IterState& s,
                         const CommMatrix& comm, const StepSchedule& sched);

// One iteration as two message-passing blocks.
IterState iterate_mpnn(const problems::ProblemInstance& inst, const IterState& s,
                       const CommMatrix& comm, const StepSchedule& sched,
                       XSolver solver = XSolver::closed_form);

struct TraceRow {
  int k = 0;
  double error = 0.0;
  double consensus = 0.0;
  double relative_objective = 0.0;
};

struct RunResult {
  IterState state;
  std::vector<TraceRow> trace;  // k = 0..k_total when recorded
};

RunResult run(const problems::ProblemInstance& inst, const CommMatrix& comm,
              const StepSchedule& sched, int k_total, bool record_trace,
              XSolver solver = XSolver::closed_form);

// x^K with alpha = 1 and unit edge weights.
Eigen::MatrixXd run_baseline(const problems::ProblemInstance& inst, int K);

TraceRow trace_row(const problems::ProblemInstance& inst, const IterState& s);

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

}  // namespace admm_mpnn::admm
