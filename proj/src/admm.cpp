#include "admm.hpp"

#include <cmath>
#include <ostream>

#include "errors.hpp"
#include "metrics.hpp"

namespace admm_mpnn::admm {

using problems::ProblemClass;
using problems::ProblemInstance;

CommMatrix CommMatrix::build(const graph::Graph& g, const graph::EdgeWeights& w) {
  ADMM_MPNN_REQUIRE(g.num_nodes() >= 2, "ADMM needs a graph with at least two nodes");
  ADMM_MPNN_REQUIRE(w.size() == g.num_edges(), "one weight per edge required");
  for (double e : w)
    if (!(e > 0.0) || !std::isfinite(e)) throw NumericError("edge weights must be positive and finite");
  CommMatrix c;
  c.graph = g;
  c.weights = w;
  c.P = graph::weighted_laplacian(g, w);
  const int m = g.num_nodes();
  c.P_diag = c.P.diagonal();
  c.M_diag = Eigen::VectorXd::Zero(m);
  c.degree.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double sq = 0.0;
    for (int j : g.neighbors(i)) sq += c.P(j, i) * c.P(j, i);
    c.M_diag(i) = sq + c.P_diag(i) * c.P_diag(i);
    c.degree[static_cast<std::size_t>(i)] = g.degree(i);
  }
  return c;
}

Aggregates aggregate_block1(const IterState& s, const CommMatrix& comm) {
  const int m = comm.num_nodes();
  Aggregates a{Eigen::MatrixXd::Zero(m, s.x.cols()), Eigen::MatrixXd::Zero(m, s.x.cols())};
  for (int i = 0; i < m; ++i) {
    for (int j : comm.graph.neighbors(i)) {
      // message m_ji = (P_ji lambda_j, P_ji y_j)
      a.lambda_in.row(i) += comm.P(j, i) * s.lambda.row(j);
      a.y_in.row(i) += comm.P(j, i) * s.y.row(j);
    }
  }
  return a;
}

Eigen::MatrixXd aggregate_block2(const Eigen::MatrixXd& x, const CommMatrix& comm) {
  const int m = comm.num_nodes();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, x.cols());
  for (int i = 0; i < m; ++i)
    for (int j : comm.graph.neighbors(i)) out.row(i) += comm.P(i, j) * x.row(j);
  return out;
}

StepSchedule StepSchedule::constant(double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("step size must be positive");
  return StepSchedule(nullptr, 0, alpha);
}

StepSchedule::StepSchedule(Predictor predictor, int horizon, double alpha_fixed)
    : predictor_(std::move(predictor)), horizon_(horizon), alpha_fixed_(alpha_fixed) {
  if (!(alpha_fixed > 0.0)) throw ConfigError("step size must be positive");
}

Eigen::VectorXd StepSchedule::alphas(int k, const IterState& s, const CommMatrix& comm) const {
  const int m = comm.num_nodes();
  if (!predictor_ || k > horizon_) return Eigen::VectorXd::Constant(m, alpha_fixed_);
  Eigen::VectorXd a = predictor_(k, s, comm);
  ADMM_MPNN_REQUIRE(a.size() == m, "step schedule returned wrong number of step sizes");
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!(a(i) > 0.0) || !std::isfinite(a(i)))
      throw NumericError("step size at iteration " + std::to_string(k) + " is not positive and finite");
  return a;
}

IterState init_state(const ProblemInstance& inst, const CommMatrix& comm, const Eigen::MatrixXd* x0) {
  const int m = comm.num_nodes();
  IterState s;
  s.k = 0;
  s.x = x0 ? *x0 : Eigen::MatrixXd::Zero(m, inst.n);
  ADMM_MPNN_REQUIRE(s.x.rows() == m && s.x.cols() == inst.n, "init_state: x0 shape mismatch");
  s.lambda = Eigen::MatrixXd::Zero(m, inst.n);
  s.y = Eigen::MatrixXd::Zero(m, inst.n);
  for (int i = 0; i < m; ++i) {
    Eigen::RowVectorXd acc = comm.P(i, i) * s.x.row(i);
    for (int j : comm.graph.neighbors(i)) acc += comm.P(i, j) * s.x.row(j);
    s.y.row(i) = acc / (comm.degree[static_cast<std::size_t>(i)] + 1.0);
  }
  return s;
}

Eigen::VectorXd conjugate_gradient(const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs, double tol,
                                   int max_iter) {
  if (max_iter < 0) max_iter = 10 * static_cast<int>(rhs.size());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.size());
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  const double stop = tol * tol * std::max(1.0, rhs.squaredNorm());
  for (int it = 0; it < max_iter && rr > stop; ++it) {
    const Eigen::VectorXd Ap = A * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) throw NumericError("conjugate_gradient: matrix is not positive definite");
    const double step = rr / pAp;
    x += step * p;
    r -= step * Ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return x;
}

namespace {

// Solves (2 B_i^T B_i + c I) x = rhs.
Eigen::VectorXd solve_local(const ProblemInstance& inst, int i, double c, const Eigen::VectorXd& rhs,
                            XSolver solver) {
  if (inst.cls == ProblemClass::consensus && solver == XSolver::closed_form) {
    const double d = 2.0 + c;
    if (!(d > 0.0)) throw NumericError("x-update: non-positive diagonal");
    return rhs * (1.0 / d);
  }
  const Eigen::MatrixXd Bi = inst.B_of(i);
  Eigen::MatrixXd A = 2.0 * Bi.transpose() * Bi;
  A.diagonal().array() += c;
  if (solver == XSolver::conjugate_gradient) return conjugate_gradient(A, rhs);
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw NumericError("x-update: system is not positive definite");
  return llt.solve(rhs);
}

Eigen::VectorXd local_linear_term(const ProblemInstance& inst, int i) {
  const Eigen::VectorXd bi = inst.b.row(i).transpose();
  if (inst.cls == ProblemClass::consensus) return 2.0 * bi;
  return 2.0 * inst.B[static_cast<std::size_t>(i)].transpose() * bi;
}

}  // namespace

Eigen::VectorXd x_update_node(const ProblemInstance& inst, const IterState& s, const CommMatrix& comm,
                              const Aggregates& agg, int i, double alpha, XSolver solver) {
  ADMM_MPNN_REQUIRE(alpha > 0.0, "x-update: step size must be positive");
  const double Pii = comm.P_diag(i);
  const double Mii = comm.M_diag(i);
  const Eigen::VectorXd rhs =
      local_linear_term(inst, i) - Pii * s.lambda.row(i).transpose() - agg.lambda_in.row(i).transpose() +
      alpha * (Mii * s.x.row(i).transpose() - Pii * s.y.row(i).transpose() - agg.y_in.row(i).transpose());
  return solve_local(inst, i, alpha * Mii, rhs, solver);
}

IterState iterate_direct(const ProblemInstance& inst, const IterState& s, const CommMatrix& comm,
                         const StepSchedule& sched) {
  const int m = comm.num_nodes();
  ADMM_MPNN_REQUIRE(m >= 2, "iterate_direct: graph needs at least two nodes");
  const Eigen::VectorXd alpha = sched.alphas(s.k + 1, s, comm);
  IterState out;
  out.k = s.k + 1;
  out.x.resize(m, inst.n);
  for (int i = 0; i < m; ++i) {
    // argmin f_i(x) + sum_{j in N(i) u {i}} lambda_j^T P_ji x + a/2 ||P_ji (x - x_i) + y_j||^2
    double quad = 0.0;
    Eigen::VectorXd rhs = local_linear_term(inst, i);
    const auto& nbrs = comm.graph.neighbors(i);
    for (std::size_t t = 0; t <= nbrs.size(); ++t) {
      const int j = t < nbrs.size() ? nbrs[t] : i;
      const double Pji = comm.P(j, i);
      quad += Pji * Pji;
      rhs -= Pji * s.lambda.row(j).transpose();
      rhs -= alpha(i) * Pji * (s.y.row(j).transpose() - Pji * s.x.row(i).transpose());
    }
    out.x.row(i) = solve_local(inst, i, alpha(i) * quad, rhs, XSolver::closed_form).transpose();
  }
  out.y.resize(m, inst.n);
  out.lambda.resize(m, inst.n);
  for (int i = 0; i < m; ++i) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(inst.n);
    for (int j = 0; j < m; ++j)
      if (j == i || comm.P(i, j) != 0.0) acc += comm.P(i, j) * out.x.row(j);
    out.y.row(i) = acc / (comm.degree[static_cast<std::size_t>(i)] + 1.0);
    out.lambda.row(i) = s.lambda.row(i) + alpha(i) * out.y.row(i);
  }
  return out;
}

IterState iterate_mpnn(const ProblemInstance& inst, const IterState& s, const CommMatrix& comm,
                       const StepSchedule& sched, XSolver solver) {
  const int m = comm.num_nodes();
  ADMM_MPNN_REQUIRE(m >= 2, "iterate_mpnn: graph needs at least two nodes");
  // block 1: messages (P_ji lambda_j, P_ji y_j), sum aggregation, x-update
  const Aggregates agg = aggregate_block1(s, comm);
  const Eigen::VectorXd alpha = sched.alphas(s.k + 1, s, comm);
  IterState out;
  out.k = s.k + 1;
  out.x.resize(m, inst.n);
  for (int i = 0; i < m; ++i) out.x.row(i) = x_update_node(inst, s, comm, agg, i, alpha(i), solver).transpose();
  // block 2: messages P_ij x_j, sum aggregation, y- and lambda-update
  const Eigen::MatrixXd x_in = aggregate_block2(out.x, comm);
  out.y.resize(m, inst.n);
  out.lambda.resize(m, inst.n);
  for (int i = 0; i < m; ++i) {
    const double inv_deg = 1.0 / (comm.degree[static_cast<std::size_t>(i)] + 1.0);
    out.y.row(i) = inv_deg * (x_in.row(i) + comm.P_diag(i) * out.x.row(i));
    out.lambda.row(i) = s.lambda.row(i) + alpha(i) * out.y.row(i);
  }
  return out;
}

TraceRow trace_row(const ProblemInstance& inst, const IterState& s) {
  return {s.k, evaluation::error_metric(s.x, inst.x_star), evaluation::consensus_metric(s.x),
          evaluation::relative_objective(inst, s.x)};
}

RunResult run(const ProblemInstance& inst, const CommMatrix& comm, const StepSchedule& sched, int k_total,
              bool record_trace, XSolver solver) {
  ADMM_MPNN_REQUIRE(k_total >= 0, "run: k_total must be >= 0");
  RunResult r;
  r.state = init_state(inst, comm);
  if (record_trace) {
    r.trace.reserve(static_cast<std::size_t>(k_total) + 1);
    r.trace.push_back(trace_row(inst, r.state));
  }
  for (int k = 0; k < k_total; ++k) {
    r.state = iterate_mpnn(inst, r.state, comm, sched, solver);
    if (record_trace) r.trace.push_back(trace_row(inst, r.state));
  }
  return r;
}

Eigen::MatrixXd run_baseline(const ProblemInstance& inst, int K) {
  return run(inst, CommMatrix::unit(inst.graph), StepSchedule::constant(1.0), K, false).state.x;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  char buf[128];
  os << "k,error,consensus,relative_objective\n";
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.k, r.error, r.consensus, r.relative_objective);
    os << buf;
  }
}

}  // namespace admm_mpnn::admm
